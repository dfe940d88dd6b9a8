"""Compare streaming throughput across stage profiles.

Three scenarios: the stock acquisition-bound profile, a heavier network
that flips the bottleneck to inference, and the same heavy profile run
without sliding overlap. Speedups are quoted against a 1 s/frame
offline post-processing baseline.
"""

from pics.rtpipeline import (
    StageProfile,
    glim_profile,
    simulate_stream,
    throughput_report,
)

scenarios = [
    ("stock glim", glim_profile(), True),
    ("heavy inference", StageProfile(infer_ms_per_channel=200.0), True),
    ("heavy, no sliding", StageProfile(infer_ms_per_channel=200.0), False),
]

for name, profile, sliding in scenarios:
    report = throughput_report(profile, sliding=sliding, baseline_ms=1000.0)
    print(f"{name:18s} period {report['period_ms']:6.1f} ms  "
          f"bottleneck {report['bottleneck']:9s} latency {report['latency_ms']:6.1f} ms")

report = throughput_report(glim_profile(), baseline_ms=1000.0)
print()
print(f"speedup vs offline baseline   {report['speedup_replacing_baseline']:.1f}x")
print(f"counting reused acquisition   {report['speedup_with_acquisition']:.1f}x")

timeline = simulate_stream(glim_profile(), n_outputs=4)
print()
print("first acquisition windows:")
for window in timeline.for_stage("acquire")[:4]:
    print(f"  frame {window.index}: {window.start_ms:6.1f} -> {window.end_ms:6.1f} ms")
