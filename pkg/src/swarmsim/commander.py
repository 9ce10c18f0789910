"""Per-agent supervisory state machine.

The Commander allows or prohibits actions by mode; illegal events leave the
state unchanged and are logged as rejections.  Actuator output is permitted
only in the active flight modes (never STANDBY or FAILSAFE).
"""

from __future__ import annotations

from dataclasses import dataclass, field

STANDBY = "STANDBY"
TAXI = "TAXI"
LAUNCH = "LAUNCH"
MISSION = "MISSION"
AVOID = "AVOID"
RTL = "RTL"
LAND = "LAND"
FAILSAFE = "FAILSAFE"

MODES = (STANDBY, TAXI, LAUNCH, MISSION, AVOID, RTL, LAND, FAILSAFE)

# (mode, event) -> next mode.  Anything absent is an illegal transition.
TRANSITIONS: dict[tuple[str, str], str] = {
    (STANDBY, "launch_command"): TAXI,
    (TAXI, "taxi_complete"): LAUNCH,
    (LAUNCH, "reached_altitude"): MISSION,
    (MISSION, "avoid_triggered"): AVOID,
    (AVOID, "threat_cleared"): MISSION,
    (MISSION, "rtl_command"): RTL,
    (MISSION, "land_command"): RTL,
    (MISSION, "battery_low"): RTL,
    (MISSION, "link_lost"): RTL,
    (AVOID, "rtl_command"): RTL,
    (AVOID, "land_command"): RTL,
    (AVOID, "battery_low"): RTL,
    (RTL, "at_home"): LAND,
    (LAND, "touchdown"): STANDBY,
}

# mission_command (formation change, tracking start, ...) is accepted without
# a mode change only in these modes.
MISSION_COMMAND_MODES = (MISSION, AVOID)

ACTUATOR_MODES = (TAXI, LAUNCH, MISSION, AVOID, RTL, LAND)

EVENTS = tuple(sorted({e for _, e in TRANSITIONS} | {"mission_command", "failsafe"}))


@dataclass
class CommanderState:
    mode: str = STANDBY
    last_event: str = ""
    transitions: list[tuple[float, str, str, str]] = field(default_factory=list)
    rejections: list[tuple[float, str, str]] = field(default_factory=list)

    def actuators_allowed(self) -> bool:
        return self.mode in ACTUATOR_MODES


def commander_step(state: CommanderState, event: str, now: float = 0.0) -> CommanderState:
    """Apply one event; mutates and returns the state."""
    if event not in EVENTS:
        raise ValueError(f"unknown event: {event}")
    if event == "failsafe":
        state.transitions.append((now, state.mode, FAILSAFE, event))
        state.mode = FAILSAFE
        state.last_event = event
        return state
    if event == "mission_command":
        if state.mode in MISSION_COMMAND_MODES:
            state.last_event = event
        else:
            state.rejections.append((now, state.mode, event))
        return state
    nxt = TRANSITIONS.get((state.mode, event))
    if nxt is None:
        state.rejections.append((now, state.mode, event))
        return state
    state.transitions.append((now, state.mode, nxt, event))
    state.mode = nxt
    state.last_event = event
    return state
