"""Regenerate the stored feature conformance vectors.

Writes data/catch22_vectors.txt: a fixed battery of seeded input series
together with the 22 expected feature values produced by the independent
reference implementations in catch22_oracle.py. Values are written with
repr precision so they round-trip exactly.

Run from the tests directory: python3 make_catch22_vectors.py
"""
from pathlib import Path

import numpy as np

from catch22_oracle import ORACLE_NAMES, oracle_catch22


def battery() -> dict[str, np.ndarray]:
    rng = np.random.default_rng(1234)
    out = {
        "gaussian_white_750": rng.standard_normal(750),
        "gaussian_white_384": rng.standard_normal(384),
        "sine_10_periods_1000": np.sin(2 * np.pi * 10 * np.arange(1000) / 1000.0),
        "noisy_sine_750": (np.sin(2 * np.pi * 7 * np.arange(750) / 750.0)
                           + 0.3 * rng.standard_normal(750)),
        "random_walk_500": np.cumsum(rng.standard_normal(500)),
    }
    ar = np.zeros(1000)
    for i in range(1, 1000):
        ar[i] = 0.8 * ar[i - 1] + rng.standard_normal()
    out["ar1_0p8_1000"] = ar
    return out


def main() -> None:
    path = Path(__file__).parent / "data" / "catch22_vectors.txt"
    lines = ["# conformance vectors: input series and expected feature values",
             "# regenerate with make_catch22_vectors.py"]
    for name, series in battery().items():
        expected = oracle_catch22(series)
        lines.append(f"series {name}")
        lines.append(f"n {series.size}")
        lines.extend(repr(float(v)) for v in series)
        lines.append("expect")
        lines.extend(f"{fname} {repr(float(val))}"
                     for fname, val in zip(ORACLE_NAMES, expected))
        lines.append("end")
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
