"""Scikit-learn style front door for the variational completer.

DepthCompleter exposes the loss and solver settings as flat constructor
parameters, so it plugs into parameter-sweep tooling that expects the
get_params / set_params protocol, while fit() just runs the solver.
"""

import inspect

import numpy as np

from .grid import SparseDepth
from .losses import GcConfig, LossConfig, SmsConfig
from .solver import SolverConfig, solve


class DepthCompleter:
    """Completes a dense depth map from sparse samples by direct optimization.

    Parameters mirror LossConfig and SolverConfig one-to-one. The estimator
    holds no learned state: fit() solves for the given scene and exposes the
    result as fitted attributes, transform() re-solves for whatever input it
    is handed.
    """

    def __init__(self, terms=("dc", "gc", "sms"), gc_window=8,
                 gc_select_fraction=0.02, gc_basis="mask",
                 gc_edge_exclusion=True, sms_select_fraction=0.40,
                 sms_variant="selective_mask", alpha=0.1, max_iterations=2000,
                 learning_rate=1e-3, momentum_decay=0.9, variance_decay=0.999,
                 epsilon=1e-8, convergence_tol=1e-6, convergence_window=50,
                 init="nearest_sample", init_constant=None, clamp_min=1e-3,
                 clamp_max=10.0, seed=0):
        self.terms = terms
        self.gc_window = gc_window
        self.gc_select_fraction = gc_select_fraction
        self.gc_basis = gc_basis
        self.gc_edge_exclusion = gc_edge_exclusion
        self.sms_select_fraction = sms_select_fraction
        self.sms_variant = sms_variant
        self.alpha = alpha
        self.max_iterations = max_iterations
        self.learning_rate = learning_rate
        self.momentum_decay = momentum_decay
        self.variance_decay = variance_decay
        self.epsilon = epsilon
        self.convergence_tol = convergence_tol
        self.convergence_window = convergence_window
        self.init = init
        self.init_constant = init_constant
        self.clamp_min = clamp_min
        self.clamp_max = clamp_max
        self.seed = seed

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for DepthCompleter")
            setattr(self, name, value)
        return self

    def _loss_config(self):
        return LossConfig(
            terms=tuple(self.terms),
            gc=GcConfig(window_size=self.gc_window,
                        select_fraction=self.gc_select_fraction,
                        basis=self.gc_basis,
                        edge_exclusion=self.gc_edge_exclusion),
            sms=SmsConfig(select_fraction=self.sms_select_fraction,
                          variant=self.sms_variant),
            alpha=self.alpha,
        )

    def _solver_config(self):
        return SolverConfig(
            max_iterations=self.max_iterations,
            learning_rate=self.learning_rate,
            momentum_decay=self.momentum_decay,
            variance_decay=self.variance_decay,
            epsilon=self.epsilon,
            convergence_tol=self.convergence_tol,
            convergence_window=self.convergence_window,
            init=self.init,
            init_constant=self.init_constant,
            clamp_min=self.clamp_min,
            clamp_max=self.clamp_max,
            seed=self.seed,
        )

    @staticmethod
    def _as_sparse(X):
        if isinstance(X, SparseDepth):
            return X
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(
                f"expected a 2-D sparse depth map, got shape {arr.shape}")
        return SparseDepth.from_map(arr)

    def fit(self, X, y=None, mask=None, image=None, seg_pred=None):
        """Solve for the scene in X; X is a SparseDepth or an H x W map
        with zeros marking missing pixels. y is ignored (API symmetry)."""
        sparse = self._as_sparse(X)
        depth, trace = solve(sparse, mask=mask, image=image,
                             loss_cfg=self._loss_config(),
                             solver_cfg=self._solver_config(),
                             seg_pred=seg_pred)
        self.depth_ = depth
        self.trace_ = trace
        self.n_iter_ = trace.iterations
        self.termination_ = trace.termination
        return self

    def transform(self, X, mask=None, image=None, seg_pred=None):
        """Complete X with the configured settings and return the dense map."""
        return self.fit(X, mask=mask, image=image, seg_pred=seg_pred).depth_

    def fit_transform(self, X, y=None, mask=None, image=None, seg_pred=None):
        return self.fit(X, y=y, mask=mask, image=image,
                        seg_pred=seg_pred).depth_

    def predict(self, X, mask=None, image=None, seg_pred=None):
        return self.transform(X, mask=mask, image=image, seg_pred=seg_pred)

    def __repr__(self):
        defaults = {
            name: param.default for name, param in
            inspect.signature(type(self).__init__).parameters.items()
            if name != "self"
        }
        shown = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items()
                          if v != defaults[k])
        return f"DepthCompleter({shown})"
