"""Launch 21 aircraft in a staggered wave and watch the rate settle.

Spacing is fitted so the last liftoff happens 110.43 s after the launch
order, which puts the mean time between launches at about 5.26 s.
"""

from swarmsim.airframe import PlatformConfig
from swarmsim.scenario import LaunchSpec, MissionSpec, ScenarioConfig, fit_launch_spacing
from swarmsim.simkernel import SimKernel


def main():
    taxi_time = 20.0 / 8.0
    spacing = fit_launch_spacing(21, taxi_time, 110.43)
    print(f"taxi takes {taxi_time:.2f} s, fitted spacing {spacing:.4f} s")

    platform = PlatformConfig(name="default")
    cfg = ScenarioConfig(
        name="launch-wave", seed=5, duration=120.0,
        fleet=[(i + 1, platform, (50.0 * (i % 7), 50.0 * (i // 7)))
               for i in range(21)],
        launch=LaunchSpec(spacing=spacing, taxi_distance=20.0, taxi_speed=8.0),
        missions=[MissionSpec(time=0.0, kind="launch")],
        record_states=False)
    kernel = SimKernel(cfg)
    _, report = kernel.run()

    print("\nliftoff times from the launch order:")
    for i, tau in enumerate(report.launch_times, 1):
        bar = "#" * int(tau / 2)
        print(f"  {i:2d}  {tau:7.2f} s  {bar}")
    print(f"\nlaunch rate: {report.launch_rate:.4f} s per aircraft")


if __name__ == "__main__":
    main()
