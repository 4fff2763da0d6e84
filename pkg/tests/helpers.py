import numpy as np
from scipy.special import logit

from acdesign.data import Dataset
from acdesign.score import ScoredDataset


def make_scored(T, e=None, psi=None, X=None, Z=None, Y=None):
    T = np.asarray(T, dtype=int)
    n = T.size
    e = np.full(n, 0.5) if e is None else np.asarray(e, dtype=float)
    psi = np.zeros(n) if psi is None else np.asarray(psi, dtype=float)
    X = np.zeros((n, 1)) if X is None else np.asarray(X, dtype=float)
    data = Dataset(X, T, Y, Z)
    return ScoredDataset(data, np.arange(n), e, psi, logit(e))
