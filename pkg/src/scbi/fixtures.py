"""Built-in 3x3 and 4x4 test matrices and priors.

Literals carry four decimals; matrices are column-renormalized and priors
renormalized on load to absorb the print rounding (sums were off by up to
5e-4).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import normalize_columns, normalize_vector

_MATRICES_3 = {
    "m1": [[0.6559, 0.5505, 0.7310],
           [0.1680, 0.3359, 0.0403],
           [0.1760, 0.1136, 0.2287]],
    "m2": [[0.2461, 0.6600, 0.4310],
           [0.6785, 0.0655, 0.2325],
           [0.0754, 0.2746, 0.3365]],
    "m3": [[0.7286, 0.1937, 0.7620],
           [0.0739, 0.4786, 0.1999],
           [0.1974, 0.3277, 0.0382]],
    "m4": [[0.4745, 0.2024, 0.5946],
           [0.2898, 0.7499, 0.1313],
           [0.2357, 0.0477, 0.2741]],
    "m5": [[0.2207, 0.5466, 0.1605],
           [0.3828, 0.3807, 0.5697],
           [0.3965, 0.0727, 0.2698]],
}

_PRIORS_3 = {
    "theta1": [0.3333, 0.3333, 0.3333],
    "theta2": [0.1937, 0.4291, 0.3771],
    "theta3": [0.4544, 0.0814, 0.4641],
    "theta4": [0.5955, 0.2995, 0.1051],
    "theta5": [0.4771, 0.0593, 0.4636],
}

_MATRICES_4 = {
    "m1p": [[0.3916, 0.2306, 0.0460, 0.0404],
            [0.1408, 0.6350, 0.2139, 0.2310],
            [0.2375, 0.0275, 0.1667, 0.2412],
            [0.2301, 0.1068, 0.5734, 0.4874]],
    "m2p": [[0.3744, 0.6892, 0.0112, 0.3200],
            [0.3204, 0.2320, 0.4498, 0.3530],
            [0.0291, 0.0688, 0.3865, 0.0653],
            [0.2761, 0.0100, 0.1526, 0.2618]],
    "m3p": [[0.2885, 0.0873, 0.2319, 0.1009],
            [0.0653, 0.2239, 0.0575, 0.2584],
            [0.5934, 0.3276, 0.2283, 0.3925],
            [0.0529, 0.3612, 0.4823, 0.2482]],
}

_PRIORS_4 = {
    "theta1p": [0.2500, 0.2500, 0.2500, 0.2500],
    "theta2p": [0.1789, 0.3664, 0.2915, 0.1632],
    "theta3p": [0.4460, 0.4676, 0.0821, 0.0043],
}


@dataclass(frozen=True)
class FixtureSet:
    matrices_3x3: dict[str, np.ndarray]
    priors_3: dict[str, np.ndarray]
    matrices_4x4: dict[str, np.ndarray]
    priors_4: dict[str, np.ndarray]

    def matrix(self, name: str) -> np.ndarray:
        name = name.lower()
        for table in (self.matrices_3x3, self.matrices_4x4):
            if name in table:
                return table[name].copy()
        raise KeyError(f"unknown fixture matrix {name!r}")

    def prior(self, name: str) -> np.ndarray:
        name = name.lower()
        for table in (self.priors_3, self.priors_4):
            if name in table:
                return table[name].copy()
        raise KeyError(f"unknown fixture prior {name!r}")

    def raw(self) -> dict[str, list]:
        """The printed literals, before renormalization."""
        return {**_MATRICES_3, **_PRIORS_3, **_MATRICES_4, **_PRIORS_4}


def load_fixtures() -> FixtureSet:
    return FixtureSet(
        matrices_3x3={k: normalize_columns(np.array(v)) for k, v in _MATRICES_3.items()},
        priors_3={k: normalize_vector(v) for k, v in _PRIORS_3.items()},
        matrices_4x4={k: normalize_columns(np.array(v)) for k, v in _MATRICES_4.items()},
        priors_4={k: normalize_vector(v) for k, v in _PRIORS_4.items()},
    )


FIXTURES = load_fixtures()
