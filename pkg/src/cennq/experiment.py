"""Training and quantization sweeps shared by the CLI and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import TemplateSet
from .pso import PsoConfig, TrainingTask, accuracy_percent, train
from .quantizer import BATCH_MODES, STRATEGIES, QuantSet, incremental_quantize, is_closed

DEFAULT_M_RANGE = (0, 1, 2, 3, 4)


def train_template(task: TrainingTask, cfg: PsoConfig) -> tuple[TemplateSet, float, list]:
    """Learn a floating-point template; returns ``(template, objective, history)``."""
    res = train(task, cfg)
    return task.template(res.params), res.objective, res.history


@dataclass
class SweepRow:
    strategy: str
    batch: str
    m: int
    objective: float
    accuracy: float
    rounds: int
    closed: bool
    wall_time: float
    template: TemplateSet
    round_objectives: list

    @property
    def label(self) -> str:
        return f"{self.strategy}-{self.batch}"

    def record(self) -> dict:
        return {"strategy": self.strategy, "batch": self.batch, "m": self.m,
                "objective": self.objective, "accuracy": self.accuracy, "rounds": self.rounds,
                "closed": self.closed, "wall_time": round(self.wall_time, 3)}


def reference_task(task: TrainingTask, template: TemplateSet) -> TrainingTask:
    """Replace the ideal outputs by the floating template's own outputs."""
    theta = np.append(template.params(), template.bias)
    return task.with_ideals(task.outputs(theta))


def sweep(template: TemplateSet, task: TrainingTask, strategies=STRATEGIES, batch_modes=BATCH_MODES,
          m_values=DEFAULT_M_RANGE, pso_iterations: int = 500, seed: int = 0, swarm_size: int = 10,
          on_row=None) -> list:
    """Quantize ``template`` under every (strategy, batch, m) combination.

    Ideal outputs are those of the unquantized template, so a row's
    accuracy measures how faithfully the quantized template reproduces it.
    ``on_row`` is called with each finished row (for incremental output).
    """
    ref = reference_task(task, template)
    n_pairs = len(ref.pairs)
    rows = []
    for m in m_values:
        qs = QuantSet.symmetric(m)
        for strategy in strategies:
            for batch in batch_modes:
                cfg = PsoConfig.for_range(m, iterations=pso_iterations, swarm_size=swarm_size, seed=seed)
                t0 = time.perf_counter()
                res = incremental_quantize(template, ref, qs, strategy, batch, pso_cfg=cfg, seed=seed)
                row = SweepRow(strategy, batch, m, res.objective, accuracy_percent(res.objective, n_pairs),
                               len(res.state.round_log) - 1, is_closed(res.template, qs),
                               time.perf_counter() - t0, res.template,
                               [r.objective for r in res.state.round_log])
                rows.append(row)
                if on_row is not None:
                    on_row(row)
    return rows
