"""Exact-diagonalization work statistics and (generalized) fluctuation relations for the Dicke model."""
from .errors import (ChargeNotConserved, ConfigError, DickeQFRError, InfeasibleTarget, InvalidArgument,
                     NumericFailure, TruncationGuardViolation)
from .hilbert import BasisDescriptor, OperatorMatrix, boson_ops, commutator_norm, spin_ops, tensor
from .model import (DickeParams, MSector, build_charge_M, build_hamiltonian, build_parity, conserved_limit,
                    m_sectors)
from .spectra import LabeledSpectrum, diagonalize, eig_hermitian, eig_in_sectors, parity_split_eig
from .ensembles import (BetaVector, EnsembleWeights, FitTargets, expectation, fit_gibbs_beta, fit_temperatures,
                        generalized_free_energy, gge_weights)
from .tpm import (ProtocolOutcome, QuenchSchedule, TransitionMatrix, WorkDistribution, backward_protocol,
                  forward_protocol, forward_work_pdf, generalized_work_pdf, propagator, transition_matrix)
from .qfr import (CrooksCheck, JarzynskiCheck, check_generalized_jarzynski, check_jarzynski, crooks_pair,
                  occupation_comparison)

__version__ = "0.1.0"
