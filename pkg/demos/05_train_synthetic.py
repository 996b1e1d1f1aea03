"""Joint training on a synthetic dataset, end to end.

Uses a reduced geometry (16x16 images, 7 simulated qubits) so the demo runs
in well under a minute; the production 12-qubit configuration trains the
same way through the CLI (see the README).

Run:  python demos/05_train_synthetic.py
"""

import tempfile
import time

from quanvnet import dataio
from quanvnet import model as qm

with tempfile.TemporaryDirectory() as workdir:
    spec = dataio.SyntheticSpec(num_classes=3, image_size=16, channels=2,
                                train_samples=60, validation_samples=30,
                                test_samples=30, noise=0.1, seed=5)
    dataio.generate_synthetic(spec, workdir)
    data = dataio.load_dataset(workdir)
    print(f"synthetic dataset: {data['train'][0].shape[0]} train / "
          f"{data['validation'][0].shape[0]} val / {data['test'][0].shape[0]} test, "
          f"{spec.num_classes} grating orientations")

    config = qm.ModelConfig(image_size=16, patch_size=4, features=3, blocks=1,
                            kernels=2, channels=2, num_classes=3, alpha=5.0,
                            learning_rate=0.01, batch_size=12, epochs=8, runs=1, seed=7)
    model = qm.HybridModel(config)
    print(f"parameters: {model.segment_lengths} "
          f"({sum(model.segment_lengths.values())} total, "
          f"{model.segment_lengths['quantum']} quantum)")

    start = time.time()
    result = qm.train_single_run(model, data["train"], data["validation"], run_seed=config.seed)
    print(f"\ntrained {config.epochs} epochs in {time.time() - start:.1f}s")
    print("epoch  loss     l_ce     l_mse    train_acc  val_loss  val_acc")
    for row in result.rows:
        print(f"{row.epoch:>5}  {row.loss:.4f}  {row.l_ce:.4f}  {row.l_mse:.5f}  "
              f"{row.train_acc:>8.3f}  {row.val_loss:.4f}  {row.val_acc:>7.3f}")

    metrics = qm.evaluate(model, result.best_store, *data["test"])
    print(f"\nbest epoch {result.best_epoch}; test accuracy {metrics.accuracy:.3f}")
    print("per-class F1:", [round(float(f), 3) for f in metrics.f1])
