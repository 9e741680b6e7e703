"""Desk-scale household gridworld with a question-asking agent pair.

Layers, bottom up: ``world`` (deterministic grid simulator), ``tasks``
(procedural scenes, 25 sub-goal task types, expert plans, dataset folds),
``dialogue`` (instructions, questions, ground-truth oracle), ``agent``
(performer and questioner models), ``training`` (imitation, supervised
pretraining, actor-critic fine-tuning), ``harness`` (episodes, baselines,
metrics, ablations) plus ``checkpoint``/``report``/``cli`` plumbing.
"""

from askgrid.world import AskgridError

__version__ = "0.1.0"

__all__ = ["AskgridError", "__version__"]
