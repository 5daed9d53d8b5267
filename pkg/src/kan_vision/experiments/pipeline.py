"""
Data preparation shared by the train command and the experiment runner.

A data pool is the seed-independent part (files loaded, desk-scale reduction, optional
standardization). Each run then draws its balanced fraction and label noise from its own seed.
Label noise touches training labels only; the test split stays clean.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from ..config import RunConfig
from ..data import LabeledDataset, NoiseSpec, RegressionDataset, balanced_subset, edge_dataset, inject_label_noise, load_cifar_split, standardize, synth_regression
from ..exceptions import MissingDataError
from ..tensor_core import derive_seed

logger = logging.getLogger(__name__)

NOISE_POLICY = "symmetric label noise excluding the true class, applied to training labels only; test labels are clean"

Dataset = Union[LabeledDataset, RegressionDataset]


@dataclass
class DataPool:
    train: Optional[LabeledDataset]
    test: Optional[LabeledDataset]


def pool_key(config: RunConfig) -> Tuple:
    data = config.data
    return (data.dataset, data.data_dir, data.subset, data.subset_seed, data.standardize)


def load_pool(config: RunConfig) -> DataPool:
    """Load the seed-independent data of a run."""
    data = config.data
    if data.dataset in ("cifar10", "cifar100"):
        if not data.data_dir:
            raise MissingDataError("no CIFAR directory configured; set data.data_dir, --data-dir or KAN_VISION_DATA_DIR")
        train = load_cifar_split(data.data_dir, data.dataset, "train")
        test = load_cifar_split(data.data_dir, data.dataset, "test")
        if data.subset < 1.0:
            train = balanced_subset(train, data.subset, data.subset_seed)
            test = balanced_subset(test, data.subset, data.subset_seed)
            logger.info(f"Reduced {data.dataset} pool to {len(train)} train / {len(test)} test images")
        if data.standardize:
            train, test = standardize(train, test)
        return DataPool(train, test)
    if data.dataset in ("edge_left", "edge_right"):
        dataset = edge_dataset(data.dataset.split("_", 1)[1])
        return DataPool(dataset, dataset)
    return DataPool(None, None)


def prepare_run(config: RunConfig, pool: Optional[DataPool] = None) -> Tuple[Dataset, Dataset]:
    """Training and test sets of one run, with the run seed's fraction and noise applied."""
    data = config.data
    seed = config.train.seed
    if data.dataset == "regression":
        domain = (float(data.regression_domain[0]), float(data.regression_domain[1]))
        train = synth_regression(data.regression_fn, data.regression_train_n, domain, data.regression_noise_sd, derive_seed(seed, "regression", "train"))
        test = synth_regression(data.regression_fn, data.regression_test_n, domain, 0.0, derive_seed(data.subset_seed, "regression", "test"))
        return train, test
    pool = pool or load_pool(config)
    assert pool.train is not None and pool.test is not None
    train_set: LabeledDataset = pool.train
    if config.train.fraction < 1.0:
        train_set = balanced_subset(train_set, config.train.fraction, seed)
    if config.train.noise > 0.0:
        train_set = inject_label_noise(train_set, NoiseSpec(config.train.noise, seed))
    return train_set, pool.test
