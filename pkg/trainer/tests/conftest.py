import subprocess

import pytest
import torch

torch.set_num_threads(2)


def toolkit(args):
    """Run the curation toolkit CLI; the trainer only talks through it."""
    proc = subprocess.run(["fractokit", "--quiet", *args], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """120-image corpus with folds and fold-0 sampler weights."""
    root = tmp_path_factory.mktemp("small_corpus")
    toolkit(["--seed", "5", "synth", "--out", str(root / "corpus"), "--n-per-class-per-mag", "5", "--size", "128"])
    toolkit(["--seed", "5", "split", "--manifest", str(root / "corpus" / "manifest.jsonl"),
             "--out", str(root / "folds.csv"), "--k", "5"])
    toolkit(["weights", "--manifest", str(root / "corpus" / "manifest.jsonl"),
             "--folds", str(root / "folds.csv"), "--fold", "0", "--out", str(root / "weights.csv")])
    return root
