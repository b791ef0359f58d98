"""Real-time reliability management: contingency subsets and RMAC solves."""

from .contingency import BASE_EVENT, Contingency, ContingencyModel, UnknownEvent
from .rmac import (Behavior, CorrectiveBehaviorModel, RtDecision, RtInputs, RtParams, RtReport,
                   SubsetMode, rt_rmac_corrective, rt_rmac_preventive)
from .subset import (assess, criticality, initial_subset, pessimistic_bound, residual_risk,
                     select_subset_hybrid, select_subset_iterative, select_subset_pessimistic)

__all__ = [
    "BASE_EVENT", "Behavior", "Contingency", "ContingencyModel", "CorrectiveBehaviorModel",
    "RtDecision", "RtInputs", "RtParams", "RtReport", "SubsetMode", "UnknownEvent", "assess",
    "criticality", "initial_subset", "pessimistic_bound", "residual_risk", "rt_rmac_corrective",
    "rt_rmac_preventive", "select_subset_hybrid", "select_subset_iterative",
    "select_subset_pessimistic",
]
