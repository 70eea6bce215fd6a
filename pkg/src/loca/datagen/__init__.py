from .antiderivative import antiderivative_dataset, antiderivative_multiscale_dataset, antiderivative_solve
from .darcy import darcy_dataset, darcy_permeability_sample, darcy_solve
from .gp import GpSpec, gp_sample
from .samples import (Dataset, OperatorSample, add_noise, noisy_dataset, sample_rng, subsample_dataset,
                      subsample_labels)

__all__ = [
    "Dataset",
    "GpSpec",
    "OperatorSample",
    "add_noise",
    "antiderivative_dataset",
    "antiderivative_multiscale_dataset",
    "antiderivative_solve",
    "darcy_dataset",
    "darcy_permeability_sample",
    "darcy_solve",
    "gp_sample",
    "noisy_dataset",
    "sample_rng",
    "subsample_dataset",
    "subsample_labels",
]
