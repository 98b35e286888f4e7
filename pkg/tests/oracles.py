"""Independent reference computations used to cross-check the package.

Nothing here imports the code under test beyond plain data containers.
"""

import math

import numpy as np


def perf(values, run, unit_tasks, directions):
    """Unit performance: per-task mean of sign-corrected metrics, then mean over tasks."""
    per_task = []
    for task in unit_tasks:
        vals = [(-1 if directions[(task, m)] == "lower" else 1) * values[(run, task, m)]
                for (t, m) in directions if t == task]
        per_task.append(sum(vals) / len(vals))
    return sum(per_task) / len(per_task)


def contribution_oracle(values, units, members, directions, chat=False):
    n = len(units)
    C = [[0.0] * n for _ in range(n)]
    for a, i in enumerate(units):
        for b, j in enumerate(units):
            if a == b:
                C[a][b] = 1.0
                continue
            P = lambda run: perf(values, run, members[j], directions)  # noqa: E731
            if chat:
                C[a][b] = (P(f"only:{i}") - P("base")) / (P(f"only:{j}") - P("base"))
            else:
                C[a][b] = (P(f"plus_mini:{i}") - P("mini")) / (P(f"plus_mini:{j}") - P("mini"))
    return np.array(C)


def difficulty_oracle(values, units, members, directions, approach="real"):
    out = []
    for i in units:
        P = lambda run: perf(values, run, members[i], directions)  # noqa: E731
        if approach == "real":
            out.append(1 - P("mini") / P(f"plus_mini:{i}"))
        elif approach == "precise":
            out.append(1 - P(f"mini_of:{i}") / P(f"plus_mini:{i}"))
        else:
            out.append(1 - P(f"mini_of:{i}") / P(f"only:{i}"))
    return np.array(out)


def scaled_softmax_oracle(scores, T):
    """N * softmax(scores / T) with math.exp and no max shift."""
    e = [math.exp(s / T) for s in scores]
    total = math.fsum(e)
    return np.array([len(scores) * x / total for x in e])


def relative_improvement_oracle(evaluated, baseline, lower=()):
    """Mean over tasks of the signed relative change (single metric per task)."""
    terms = []
    for task, b in baseline.items():
        r = (evaluated[task] - b) / b
        terms.append(-r if task in lower else r)
    return sum(terms) / len(terms), sum(max(0.0, -t) for t in terms) / len(terms)


def ew_oracle(unit_losses):
    flat = [x for losses in unit_losses.values() for x in losses]
    return math.fsum(flat) / len(flat)


def tla_oracle(unit_losses):
    means = [math.fsum(v) / len(v) for v in unit_losses.values() if len(v)]
    return math.fsum(means) / len(means)


def vitw_oracle(unit_losses, weights):
    num = math.fsum(weights[u] * x for u, v in unit_losses.items() for x in v)
    den = math.fsum(weights[u] for u, v in unit_losses.items() for _ in v)
    return num / den
