"""Brownian-bridge diffusion for generative sequential recommendation."""

from .schedule import BridgeSchedule, build_schedule, posterior_coefficients
from .diffusion import (combined_loss, diffusion_loss, elbo_step_weight,
                        forward_sample, forward_transition_sample, generate,
                        posterior_mean_var, rec_loss, reverse_step)
from .model import BBDRecModel, Denoiser, SequenceEncoder
from .data import (DatasetSplits, InteractionLog, Sample, build_samples,
                   load_csv, preprocess, split_chronological, synth_markov)
from .trainer import ModelCheckpoint, TrainConfig, train, train_step
from .evaluate import EvalReport, evaluate, recommend, time_inference
from .estimator import BBDRecommender

__version__ = "0.1.0"

__all__ = [
    "BridgeSchedule", "build_schedule", "posterior_coefficients",
    "forward_sample", "forward_transition_sample", "posterior_mean_var",
    "reverse_step", "generate", "diffusion_loss", "rec_loss",
    "combined_loss", "elbo_step_weight",
    "BBDRecModel", "Denoiser", "SequenceEncoder",
    "InteractionLog", "Sample", "DatasetSplits", "load_csv", "preprocess",
    "build_samples", "split_chronological", "synth_markov",
    "TrainConfig", "ModelCheckpoint", "train", "train_step",
    "EvalReport", "evaluate", "recommend", "time_inference",
    "BBDRecommender",
]
