"""Data generators shared by the causal and acceptance tests."""

import numpy as np
import pandas as pd

from lmscausal.causal.simulate import PLANTED_8, hidden_common_cause, linear_gaussian, skeleton_f1
from lmscausal.synthgen import ScmSpec, demographic_indicators, sample_demographics, sample_structural

__all__ = ["PLANTED_8", "SEM_NODES", "hidden_common_cause", "linear_gaussian", "sample_sem_cohort",
           "sem_spec", "skeleton_f1"]

SEM_NODES = ["start_gpa", "regularity", "login_volume", "end_gpa"]


def sem_spec() -> ScmSpec:
    """Linear default generator without GPA clamping or chronotype terms."""
    return ScmSpec(clamp_gpa=False, chronotype_effects={})


def sample_sem_cohort(n: int, seed: int) -> pd.DataFrame:
    spec = sem_spec()
    rng = np.random.default_rng(seed)
    ind = demographic_indicators(sample_demographics(spec, n, rng))
    return sample_structural(spec, n, rng, indicators=ind)[SEM_NODES]
