"""Trajectory reconstruction of unseen chaotic systems from sparse observations.

A transformer trained purely on synthetic chaotic flows fills the gaps in
sparse, noisy observations of a system it has never seen; an echo-state
reservoir then learns the reconstructed segments and generates arbitrarily
long trajectories that reproduce the attractor's long-term statistics.
"""

from . import containers, dynsys, harness, hyperopt, metrics, observe, reservoir, tensorcore, transformer
from .dynsys import RawTrajectory, SystemSpec, TrajectoryMatrix, catalog, preprocess, rk4_step, simulate, system
from .observe import ObservationSpec, SparseSeries, apply_observation, gen_stochastic_signal, make_mask
from .tensorcore import AdamState, Tensor, adam_step
from .transformer import TrainingRegime, TransformerConfig, TransformerParams, reconstruct, train
from .reservoir import (
    ReservoirConfig,
    ReservoirModel,
    closed_loop_predict,
    init_reservoir,
    ridge_readout,
    train_on_segments,
)
from .metrics import EvalReport, OccupancyGrid, deviation_value, mse, occupancy, recovery_stability, rmse

__version__ = "0.1.0"
