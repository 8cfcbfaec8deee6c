"""Ensembles of pure states in probability-phase coordinates and their mutual information."""
from .geometry import (StatePoint, amplitudes_to_coords, coords_to_amplitudes, expectation_value,
                       fs_distance, qubit_energy)
from .ensembles import (Ensemble, McmcConfig, TruncGaussP, WrappedUniformPhi, mix,
                        product_channel, read_jsonl, sample_canonical, sample_diagonal,
                        sample_dirac, sample_fs_gaussian, sample_haar, sample_naive_gaussian,
                        sample_spiral, tensor, write_jsonl)
from .estimators import (MIResult, PartitionSpec, ScalingReport, coarse_entropy,
                         kl_phase_to_uniform, mutual_information, scaling_fit)

__version__ = "0.1.0"
