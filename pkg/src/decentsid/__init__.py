"""Decentralised subspace identification of chain-interconnected state-space models."""
from .banded import BlockBandedMatrix
from .decentral import (GENERAL, IdentificationError, IdentifiedGlobal, OmegaSpec,
                        build_local_input, fit_local_matrices, identify_local_state,
                        run_algorithm1)
from .evaluation import (ExperimentConfig, VafReport, decay_study, eigen_compare,
                         generate_data, monte_carlo, similarity_fit, validation_vaf, vaf)
from .gramian import (GramianBundle, RankDeficientGramian, band_truncate, decay_envelope,
                      finite_time_gramian, observability_rank_check, reconstruct_state,
                      truncation_bound)
from .lifting import build_permutations, lift_time, structured_lifted_matrices
from .lti import (DataSet, GlobalModel, LocalModel, StructureSimilarity, add_noise_snr,
                  assemble_global, homogeneous_chain, make_heat_benchmark, simulate)
from .subspace import (AUTO, SimConfig, StateEstimate, build_data_matrices, estimate_markov,
                       estimate_state_sequence, order_select)

__version__ = "0.1.0"
