"""Software-in-the-loop simulator for distributed fixed-wing UAV swarms.

Layers mirror the onboard architecture: airframe (kinematics), lowlevel
(attitude/speed/height control and allocation), guidance (vector fields,
formation, standoff tracking), planning (routes, formations, coverage),
coordination (distributed task allocation), swarmnet (framed lossy network),
simkernel (deterministic engine and metrics) and gateway (operator bridge).
"""

__version__ = "0.1.0"
