"""Simulation and analysis toolkit for transmon dual-rail erasure qubits.

Subpackage map:

* `hilbert` — truncated tensor-product states, operators, projectors
* `device` — device parameters, Hamiltonians, gap analytics, shifts
* `noise` — frequency-noise spectra, coherence limits, samplers
* `dynamics` — Lindblad, Monte Carlo trajectories, classical chain
* `tls` — two-level-defect model and its telegraph imprint
* `pulses`/`protocols`/`channel`/`cliffords` — schedules, gates, checks,
  randomized benchmarking, and the two execution backends
* `analysis` — postselection, fits, derived metrics
* `calibration` — the four-step calibration loop
* `experiments`/`config`/`cli` — batch runners and the CLI
"""

from .device import DeviceParams, OperatingPoint, paper_device
from .hilbert import LinearOperator, ModeSpace, QuantumState
from .noise import Johnson, LorentzianPhoton, NoiseTrace, OneOverF, Telegraph
from .records import ShotRecord

__version__ = "0.1.0"

__all__ = [
    "DeviceParams",
    "Johnson",
    "LinearOperator",
    "LorentzianPhoton",
    "ModeSpace",
    "NoiseTrace",
    "OneOverF",
    "OperatingPoint",
    "QuantumState",
    "ShotRecord",
    "Telegraph",
    "__version__",
]
