"""Risk-averse contextual bandits under the mean-variance criterion.

Library plus CLI simulator: normal-gamma Thompson sampling policies over
linear payoffs, a context-free and a risk-neutral baseline, a synthetic
reward environment with an exact regret oracle, and a seeded experiment
harness that writes reproducible CSV and plot data.
"""

from .environment import (ArmTruth, builtin_truths, draw_reward, gen_contexts,
                          load_truths, mv_value, regret)
from .errors import (ConfigError, ConsistencyError, InvalidObservation,
                     InvalidParameter, MvBanditError, NoObservations,
                     NotPositiveDefinite, PolicyStateError)
from .harness import (ExperimentConfig, ExperimentResult, RoundRecord,
                      load_config, parse_config_text, read_csv, run_experiment,
                      run_replication, run_to_directory, write_csv)
from .linalg import cholesky, quad_form, sherman_morrison, spd_inverse
from .policies import (CfMvts, Decision, MvtsD, MvtsDn, TsA, UniformRandom,
                       dn_constants, ts_a_scale)
from .posterior import (ArmPosterior, ScalarArmPosterior, batch_rebuild,
                        cf_observe, init_arm, init_scalar_arm, mean_estimate,
                        observe, variance_estimate)
from .sampling import NoiseKind, RngStream, Sampler, derive_seed, sample_mvn, sample_noise

__version__ = "0.1.0"
