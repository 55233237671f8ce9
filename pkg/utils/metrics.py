"""
Run metrics in a private prometheus-client registry.

Nothing is served over HTTP; main.py dumps the registry to a text file
when --metrics-out is given.
"""

from prometheus_client import CollectorRegistry, Counter, Gauge, write_to_textfile

registry = CollectorRegistry()

games_total = Counter(
    "stein_olo_games_total", "Games played to completion", ["learner"], registry=registry
)
rounds_total = Counter(
    "stein_olo_rounds_total", "Rounds played across all games", ["learner"], registry=registry
)
bound_violations_total = Counter(
    "stein_olo_bound_violations_total",
    "Bound checks that failed",
    ["check"],
    registry=registry,
)
last_uniform_regret = Gauge(
    "stein_olo_last_uniform_regret",
    "Uniform regret of the most recent single game",
    registry=registry,
)


def record_games(learner: str, n_games: int, T: int) -> None:
    games_total.labels(learner=learner).inc(n_games)
    rounds_total.labels(learner=learner).inc(n_games * T)


def record_violations(check: str, count: int) -> None:
    if count > 0:
        bound_violations_total.labels(check=check).inc(count)


def export_metrics(path: str) -> None:
    """Write the registry in text exposition format."""
    write_to_textfile(path, registry)
