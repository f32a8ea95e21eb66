"""
Problem Registry
Maps the problem names accepted by the CLI and experiment specs to their
factories and default shapes.
"""
from typing import Any, Callable, Dict, Optional

from .errors import ContractError
from .problems import (
    Problem,
    example_31,
    make_least_squares,
    make_logistic,
    make_mlp,
    make_quadratic,
)


class ProblemRegistry:
    """Registry of known problem families and their default sizes"""

    DEFAULTS: Dict[str, Dict[str, Any]] = {
        "least-squares": {"n": 1000, "d": 20},
        "logistic": {"n": 1000, "d": 20},
        "mlp": {"n": 500, "widths": (5, 8, 1)},
        "quadratic": {"d": 5},
        "example31": {},
    }

    ALIASES = {
        "least_squares": "least-squares",
        "ls": "least-squares",
        "logreg": "logistic",
        "example_31": "example31",
        "example-31": "example31",
    }

    def __init__(self):
        self._factories: Dict[str, Callable[..., Problem]] = {
            "least-squares": lambda n, d, seed, **_: make_least_squares(n, d, seed),
            "logistic": lambda n, d, seed, **_: make_logistic(n, d, seed),
            "mlp": lambda n, widths, seed, **_: make_mlp(widths, n, seed),
            "quadratic": lambda d, seed, **_: make_quadratic(d, [1.0] * d),
            "example31": lambda **_: example_31(),
        }

    def resolve(self, name: str) -> str:
        """Canonical problem name; case and separators are forgiven."""
        key = name.strip().lower()
        key = self.ALIASES.get(key, key)
        if key not in self._factories:
            raise ContractError(f"unknown problem {name!r}; known: {', '.join(sorted(self._factories))}")
        return key

    def names(self):
        return sorted(self._factories)

    def create(self, name: str, seed: int = 0, **overrides: Any) -> Problem:
        """
        Build a problem with its defaults, overridden by any non-None keyword.

        Usage:
            registry.create("least-squares", seed=3, n=200)
        """
        key = self.resolve(name)
        params = dict(self.DEFAULTS[key])
        params.update({k: v for k, v in overrides.items() if v is not None})
        return self._factories[key](seed=seed, **params)

    def register_custom_problem(
        self,
        name: str,
        factory: Callable[..., Problem],
        defaults: Optional[Dict[str, Any]] = None,
    ):
        """Register a problem family at runtime; the factory receives seed plus defaults."""
        self._factories[name] = factory
        self.DEFAULTS[name] = dict(defaults or {})


# Singleton instance
registry = ProblemRegistry()
