# metrics_client — counting everything

"""Prometheus metrics. Import and use from anywhere. In-process only, dump with get_metrics()."""

from prometheus_client import Counter, Histogram, REGISTRY, generate_latest

# supervisor
supervisor_checks_total = Counter(
    "supervisor_checks_total",
    "Actions vetted by the safety supervisor",
    ["mode"]  # nominal, worst_case
)
supervisor_unsafe_total = Counter(
    "supervisor_unsafe_total",
    "Vetted actions rejected as unsafe",
    ["mode"]
)
retrain_updates_total = Counter(
    "retrain_updates_total",
    "Online agent updates triggered by unsafe actions"
)
backup_fallback_total = Counter(
    "backup_fallback_total",
    "Times the backup table supplied the applied input"
)
set_violations_total = Counter(
    "set_violations_total",
    "Realized states that left the safe set"
)

# worst-case check latency. sampling interval is 6 s, we expect microseconds
worst_case_latency = Histogram(
    "worst_case_latency_seconds",
    "Time per worst-case disturbance solve",
    buckets=[1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0]
)

# offline side
training_episodes_total = Counter(
    "training_episodes_total",
    "Offline training episodes rolled out"
)
synth_sweeps_total = Counter(
    "synth_sweeps_total",
    "Viability-kernel sweeps over the grid"
)


def get_metrics() -> bytes:
    """dump all metrics in prometheus format"""
    return generate_latest(REGISTRY)
