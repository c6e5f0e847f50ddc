"""Pure numpy versions of the modal-series kernels."""

import numpy as np


def modal_sum(lams, eig, gamma, beta, power=1):
    w = (lams[:, None] - eig[None, :]) ** (-power)
    return np.einsum("im,qm,mj->qij", gamma, w, beta)


def inverse_distance_sum(lams, eig):
    return np.sum(1.0 / np.abs(lams[:, None] - eig[None, :]), axis=1)


def min_distance(lams, eig):
    return np.min(np.abs(lams[:, None] - eig[None, :]), axis=1)
