"""IRS-aided links with impaired meta-atoms, viewed as reservoir computers."""

from .beamforming import (
    LinkModel,
    TrainOptions,
    derive_downlink,
    model_based_baseline,
    simulate_uplink,
    train_joint,
)
from .channels import ChannelSet, ScenarioConfig, evolve, make_channel_set
from .reservoir import EchoStateSystem, check_esp, run_reservoir, train_readout
from .surface import AtomParams, PhaseCodebook, SurfaceConfig

__version__ = "0.1.0"
