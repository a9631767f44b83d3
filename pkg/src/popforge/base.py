"""Shared estimator plumbing: parameter introspection, fitted-state checks, seeded RNG streams."""

from __future__ import annotations

import inspect
import zlib

import numpy as np


class NotFittedError(RuntimeError):
    """Raised when sample/transform-style methods run before fit."""


class InputDataError(ValueError):
    """Raised for malformed or inconsistent external inputs."""


class ParamMixin:
    """sklearn-style get_params/set_params based on the __init__ signature.

    Constructor arguments must be stored under their own names, and fitted
    state must live in trailing-underscore attributes, so estimators can be
    re-created from get_params() and inspected by generic tooling.
    """

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [n for n, p in sig.parameters.items()
                if n != "self" and p.kind != p.VAR_KEYWORD]

    def get_params(self):
        return {n: getattr(self, n) for n in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_is_fitted(estimator, attribute: str):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted (missing {attribute!r}); call fit() first")


def derive_rng(seed: int, *path) -> np.random.Generator:
    """Independent, reproducible RNG stream for a named stage/shard.

    The stream is keyed by (seed, crc32 of each path element), so the same
    (seed, path) always yields the same stream regardless of call order.
    """
    keys = [int(seed) & 0xFFFFFFFF]
    keys.extend(zlib.crc32(str(p).encode("utf-8")) for p in path)
    return np.random.default_rng(np.random.SeedSequence(keys))
