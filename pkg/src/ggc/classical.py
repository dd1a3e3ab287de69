"""Classical graph convolutional classifier and the binary cross-entropy loss."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

PROB_EPS = 1e-7


class GcnClassifier:
    """One degree-normalized convolution, mean pooling, sigmoid readout."""

    def __init__(self, input_dim, hidden_dim, rng):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        self.w = ad.parameter(ad.uniform_init((input_dim, hidden_dim), input_dim, rng))
        self.w_out = ad.parameter(ad.uniform_init((hidden_dim, 1), hidden_dim, rng))
        self.b = ad.parameter(np.zeros((1, 1)))

    def params(self):
        return {"clf.w": self.w, "clf.w_out": self.w_out, "clf.b": self.b}

    def prob(self, x: ad.Value, src, dst, weight):
        h = ad.relu(ad.matmul(ad.degree_normalized_aggregate(x, src, dst, weight), self.w))
        logit = ad.add(ad.matmul(ad.mean_rows(h), self.w_out), self.b)
        return ad.sigmoid(logit)

    def score_graph(self, g):
        """ROC score: the predicted probability, computed off-tape."""
        return self.prob(
            ad.constant(g.features), g.edge_src, g.edge_dst, g.edge_weight
        ).item()


def bce_loss(probs: ad.Value, labels):
    """Mean binary cross-entropy; probabilities are clamped to
    [1e-7, 1 - 1e-7] before the logs."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if probs.data.shape != labels.shape:
        probs = ad.stack_scalars([probs]) if probs.data.size == 1 else probs
    p = ad.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    y = ad.constant(labels)
    one = ad.constant(np.ones_like(labels))
    ll = ad.add(ad.mul(y, ad.log(p)), ad.mul(ad.sub(one, y), ad.log(ad.sub(one, p))))
    return ad.scalar_mul(ad.mean_all(ll), -1.0)
