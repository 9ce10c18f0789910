import itertools

import pytest
from hypothesis import given, strategies as st

from swarmsim.commander import (
    ACTUATOR_MODES, AVOID, EVENTS, FAILSAFE, LAND, LAUNCH, MISSION, MODES,
    RTL, STANDBY, TAXI, TRANSITIONS, CommanderState, commander_step,
)


class TestNominalSequence:
    def test_full_flight_cycle(self):
        s = CommanderState()
        for event, expected in [
            ("launch_command", TAXI),
            ("taxi_complete", LAUNCH),
            ("reached_altitude", MISSION),
            ("avoid_triggered", AVOID),
            ("threat_cleared", MISSION),
            ("rtl_command", RTL),
            ("at_home", LAND),
            ("touchdown", STANDBY),
        ]:
            commander_step(s, event)
            assert s.mode == expected

    def test_transition_log_records_source_and_target(self):
        s = CommanderState()
        commander_step(s, "launch_command", now=3.5)
        assert s.transitions == [(3.5, STANDBY, TAXI, "launch_command")]


class TestIllegalEvents:
    def test_illegal_event_is_rejected_not_raised(self):
        s = CommanderState()
        commander_step(s, "touchdown", now=1.0)
        assert s.mode == STANDBY
        assert s.rejections == [(1.0, STANDBY, "touchdown")]

    def test_unknown_event_raises(self):
        with pytest.raises(ValueError):
            commander_step(CommanderState(), "warp_drive")

    def test_mission_command_rejected_on_ground(self):
        s = CommanderState()
        commander_step(s, "mission_command", now=2.0)
        assert s.rejections and s.mode == STANDBY

    def test_mission_command_accepted_in_flight(self):
        s = CommanderState(mode=MISSION)
        commander_step(s, "mission_command")
        assert s.mode == MISSION and not s.rejections


class TestFailsafe:
    @pytest.mark.parametrize("mode", MODES)
    def test_failsafe_reachable_from_every_mode(self, mode):
        s = CommanderState(mode=mode)
        commander_step(s, "failsafe")
        assert s.mode == FAILSAFE

    def test_failsafe_is_terminal(self):
        s = CommanderState(mode=FAILSAFE)
        for event in EVENTS:
            if event == "failsafe":
                continue
            commander_step(s, event)
            assert s.mode == FAILSAFE

    @pytest.mark.parametrize("mode", (STANDBY, FAILSAFE))
    def test_actuators_prohibited(self, mode):
        assert not CommanderState(mode=mode).actuators_allowed()

    @pytest.mark.parametrize("mode", ACTUATOR_MODES)
    def test_actuators_allowed_in_flight_modes(self, mode):
        assert CommanderState(mode=mode).actuators_allowed()


class TestExhaustiveTable:
    def test_every_mode_event_pair_behaves(self):
        # Each pair either transitions per the table or appends a rejection;
        # the state machine can never land in an unknown mode.
        for mode, event in itertools.product(MODES, EVENTS):
            s = CommanderState(mode=mode)
            commander_step(s, event, now=0.0)
            assert s.mode in MODES
            if event == "failsafe":
                assert s.mode == FAILSAFE
            elif event == "mission_command":
                assert s.mode == mode
            elif (mode, event) in TRANSITIONS:
                assert s.mode == TRANSITIONS[(mode, event)]
            else:
                assert s.mode == mode and s.rejections


@given(st.lists(st.sampled_from(EVENTS), max_size=60))
def test_random_event_stream_safety(stream):
    """No event stream reaches actuator permission from FAILSAFE."""
    s = CommanderState()
    seen_failsafe = False
    for ev in stream:
        commander_step(s, ev)
        seen_failsafe = seen_failsafe or ev == "failsafe"
        if seen_failsafe:
            assert s.mode == FAILSAFE
            assert not s.actuators_allowed()
