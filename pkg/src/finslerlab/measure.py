"""Smooth measures dm = exp(phi(x)) dx on a 2-D chart."""
from __future__ import annotations

import numpy as np


class MeasureModel:
    """Log-density phi with gradient; build with the class constructors."""

    def __init__(self, kind, phi, grad=None, params=None):
        self.kind = kind
        self._phi = phi
        self._grad = grad
        self.params = dict(params or {})

    @classmethod
    def lebesgue(cls):
        return cls("lebesgue", lambda x: np.zeros(np.shape(x)[:-1]), lambda x: np.zeros(np.shape(x)))

    @classmethod
    def gaussian(cls, a=1.0):
        """phi = -a|x|^2."""
        return cls(
            "gaussian",
            lambda x: -a * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1),
            lambda x: -2 * a * np.asarray(x, dtype=float),
            {"a": float(a)},
        )

    @classmethod
    def volume(cls, metric):
        """Busemann-Hausdorff volume of a conformal Randers metric.

        The density is pi / area{y : F(x,y) < 1} = lam^2 (1 - |b/lam|^2)^(3/2),
        which is the Riemannian volume lam^2 when the drift vanishes.
        """

        def phi(x):
            lam = metric.lam(x)
            bt2 = np.sum(metric.drift(x) ** 2, axis=-1) / lam**2
            return 2 * np.log(lam) + 1.5 * np.log1p(-bt2)

        grad = None
        if metric.is_riemannian:
            def grad(x):
                return 2 * metric.lam_grad(x) / metric.lam(x)[..., None]
        return cls("volume", phi, grad, {"metric": metric.kind})

    @classmethod
    def custom(cls, phi, grad=None):
        return cls("custom", phi, grad)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self._phi(x), dtype=float), x.shape[:-1])

    def density(self, x):
        return np.exp(self.phi(x))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self._grad is not None:
            return np.broadcast_to(np.asarray(self._grad(x), dtype=float), x.shape)
        s = 1e-6
        out = np.empty(x.shape)
        for k in range(2):
            e = np.zeros(2)
            e[k] = s
            out[..., k] = (self.phi(x + e) - self.phi(x - e)) / (2 * s)
        return out

    def describe(self):
        return {"kind": self.kind, **self.params}
