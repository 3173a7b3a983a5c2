from .augment import AugmentationPolicy
from .encoder import ToyEncoder
from .losses import (BatchLossReport, Embedding, info_nce, l2_cst, mcgip_batch_loss,
                     plain_contrastive_loss)
from .probe import linear_probe
from .synth import SynthDataset, SynthParams, synth_gaze_dataset
from .training import (GatedSchedule, StaticSchedule, TrainConfig, TrainResult, diagonal_schedule,
                       mean_pairwise_distance, train)
