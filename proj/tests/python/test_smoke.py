# Copyright 2026 The slicealign Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math

import numpy as np
import pytest

import slicealign as sa


def test_extract_references():
    refs = sa.extract_references("Stable. Hepatic lesion, see series 4, image 38. Otherwise clear.")
    assert len(refs) == 1
    assert (refs[0]["series"], refs[0]["image"]) == (4, 38)
    assert refs[0]["snippet"] == "Hepatic lesion"


def test_mining_scores():
    gold = {"r1": [(4, 38), (5, 10)]}
    scores = sa.evaluate_mining({"r1": [(4, 38)]}, gold)
    assert scores["precision"] == 1.0
    assert scores["recall"] == 0.5
    assert scores["fn"] == 1


def test_objective_helpers():
    assert sa.alpha_weight(100, 2) == 20.0
    assert sa.alpha_weight(5, 100) == 0.05
    probs = sa.gaussian_soft_target(32, 16)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert int(np.argmax(probs)) == 15
    e = np.eye(2)
    assert sa.siglip_loss(e, e, 1.0, 0.0) == pytest.approx(
        -(2 * math.log(1 / (1 + math.exp(-1))) + 2 * math.log(0.5)) / 2
    )


def test_metrics():
    assert sa.roc_auc([0.1, 0.9, 0.4, 0.8], [0, 1, 0, 1]) == 100.0
    q = np.eye(4)
    assert sa.recall_at_k(q, q, 1) == 100.0


def test_errors_carry_codes():
    with pytest.raises(sa.SliceAlignError) as info:
        sa.alpha_weight(3, 0)
    assert info.value.code == "DegenerateCounts"
    with pytest.raises(sa.SliceAlignError) as info:
        sa.run_pipeline({"train": {"epoch": 3}})
    assert info.value.code == "InvalidConfig"


def test_gradcheck():
    cases = sa.gradcheck(seed=1, trials=2)
    assert len(cases) == 10
    assert {name for name, _, _ in cases} >= {"siglip_loss", "prompt_loss", "localization_loss"}
    assert max(err for _, _, err in cases) < 1e-4


def test_small_pipeline():
    cfg = {
        "synth": {"n_pairs": 300, "raw_dim": 16, "proj_dim": 8, "n_findings": 4, "depth_D": 8, "seed": 3},
        "train": {"epochs": 2, "batch_size": 32, "peak_lr": 0.001},
        "eval": {"B": 50, "retrieval_pool": 100, "merlin_pool": 16, "merlin_trials": 5},
    }
    epochs, metrics = sa.run_pipeline(cfg)
    assert [e["epoch"] for e in epochs] == [1, 2]
    assert "R@10" in metrics["metrics"]
    assert sa.run_pipeline(cfg)[1] == metrics
