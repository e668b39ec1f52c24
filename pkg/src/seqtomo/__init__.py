"""Single-setup tomography of finite-dimensional states from sequential
measurements of two Fourier-conjugate observables."""
from .core import DensityMatrix, HilbertSpec, bloch_density, mbar_grid, random_density, reduce_modular
from .moyal import MoyalTable, invert_moyal, moyal_sys
from .probes import GaussianProbe, GridProbe, gaussian_from_widths
from .forward import exact_char, exact_char_discrete, joint_pdf, sample_outcomes
from .reconstruct import ReconstructionOptions, reconstruct

__all__ = [
    "DensityMatrix", "HilbertSpec", "bloch_density", "mbar_grid", "random_density", "reduce_modular",
    "MoyalTable", "invert_moyal", "moyal_sys",
    "GaussianProbe", "GridProbe", "gaussian_from_widths",
    "exact_char", "exact_char_discrete", "joint_pdf", "sample_outcomes",
    "ReconstructionOptions", "reconstruct",
]
__version__ = "0.1.0"
