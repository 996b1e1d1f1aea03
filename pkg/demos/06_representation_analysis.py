"""Representation analyses on a trained model: feature magnitudes, k-means
clustering of the two pipeline representations, and adjusted mutual
information against ground truth.

Run:  python demos/06_representation_analysis.py
"""

import tempfile

import numpy as np

from quanvnet import analysis, dataio
from quanvnet import model as qm

with tempfile.TemporaryDirectory() as workdir:
    spec = dataio.SyntheticSpec(num_classes=3, image_size=16, channels=2,
                                train_samples=45, validation_samples=21,
                                test_samples=30, noise=0.1, seed=8)
    dataio.generate_synthetic(spec, workdir)
    data = dataio.load_dataset(workdir)

    config = qm.ModelConfig(image_size=16, patch_size=4, features=3, blocks=1,
                            kernels=2, channels=2, num_classes=3, alpha=5.0,
                            batch_size=15, epochs=6, runs=1, seed=4)
    model = qm.HybridModel(config)
    result = qm.train_single_run(model, data["train"], data["validation"], run_seed=4)
    store = result.best_store

    # collect both classical interfaces of the quantum component on test data
    images, labels = data["test"]
    out = model.forward_batch(images, store)
    features = out["features"]
    processed = out["processed"].reshape(images.shape[0], -1)

    magnitudes = analysis.feature_magnitudes(features)
    print("feature magnitudes, ranked (a flat profile means every expectation carries signal):")
    print(np.round(magnitudes, 3))

    truth = analysis.Labeling(labels, config.num_classes)
    km_processed = analysis.kmeans(processed, config.num_classes, seed=0)
    km_features = analysis.kmeans(features, config.num_classes, seed=0)
    print(f"\nk-means vs ground truth (AMI, 1 = identical partitions):")
    print(f"  processed image ({processed.shape[1]} values): {analysis.ami(km_processed, truth):.4f}")
    print(f"  feature vector  ({features.shape[1]} values): {analysis.ami(km_features, truth):.4f}")

    # AMI sanity anchors
    print("\nAMI anchors: identical ->", analysis.ami(truth, truth),
          "| single cluster ->", analysis.ami(analysis.Labeling(np.zeros(len(labels), int), 1), truth))
