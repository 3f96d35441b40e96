"""Eight-port homodyne detection with an arbitrary phase shift.

Finite-amplitude simulation of the detector network, the analytic
theta-covariant limit observable, and tools built on both.
"""

from .fock import (Grid1D, Grid2D, InvalidStateError, TruncationError, check_density,
                   coherent_density, coherent_state, compose_two_mode, hermite_basis,
                   hermite_functions, mode_operators, number_state, random_density,
                   recommended_cutoff, reduce, thermal_state, vacuum)
from .optics import (TiltAngle, apply_beam_splitter, beam_splitter, conjugate, dilation,
                     displacement, parity, phase_shifter, tilt_conjugator, tilted_weyl, weyl)
from .quadrature import DensityGrid, convolve_density, limit_rhs_density, quadrature_density
from .observable import (EfficiencyQuad, GeneratingOperator, generating_operator,
                         margin_measures, phase_space_density, smeared_generator, tilt_map,
                         weyl_transform_support)
from .eightport import (NetworkConfig, OutcomeHistogram, arm_povm, compare_to_limit,
                        joint_statistics, lo_split)
from .tomography import ForwardMap, build_forward_map, reconstruct

__version__ = "0.1.0"
