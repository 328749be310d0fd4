"""Collaborative multi-band spectrum sensing: channel model, detection,
sensor assignment, epsilon-greedy policy, analysis and experiment harness."""

from .assignment import (AssignmentMatrix, InfeasibleError, LinearizedSap, SapInstance,
                         brute_force_sap, build_constraints, hungarian, solve_bb,
                         solve_iterative_hungarian)
from .channel import (GilbertElliot, ScenarioState, SubbandProfile, draw_instant_snr,
                      instantaneous_throughput, permute_statistics, stationary_idle_prob,
                      step_markov)
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .detection import (EnergyDetector, FusionConfig, detection_probability, fuse_or,
                        fused_miss_prob, local_pfa_for_global, simulate_sense,
                        threshold_for_pfa)
from .policy import (HoppingCodebook, PolicyConfig, QTables, SensingDirective,
                     belief_myopic_select, ducb_select, genie_select, make_hopping_codebook,
                     q_update, select_bands_exploit, step_policy, su_q_limit)
from .simulate import (MetricsSeries, SlotOutcome, Simulation, miss_rate, run_experiment,
                       run_slot, sensing_ratio)

__version__ = "0.1.0"
