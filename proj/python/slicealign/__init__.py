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

"""Python bindings for the slicealign core."""

import json

from ._core import (
    SliceAlignError,
    __version__,
    alpha_weight,
    evaluate_mining,
    extract_references,
    gaussian_soft_target,
    gradcheck,
    recall_at_k,
    roc_auc,
    siglip_loss,
)
from ._core import run_pipeline as _run_pipeline


def run_pipeline(config):
    """Generate, train and evaluate from a run configuration.

    `config` is a dict or a JSON string. Returns (epoch logs, metrics) as
    parsed JSON.
    """
    text = config if isinstance(config, str) else json.dumps(config)
    epochs, metrics = _run_pipeline(text)
    return [json.loads(e) for e in epochs], json.loads(metrics)


__all__ = [
    "SliceAlignError",
    "__version__",
    "alpha_weight",
    "evaluate_mining",
    "extract_references",
    "gaussian_soft_target",
    "gradcheck",
    "recall_at_k",
    "roc_auc",
    "run_pipeline",
    "siglip_loss",
]
