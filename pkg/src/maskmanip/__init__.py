"""Mask-conditioned tabletop manipulation.

A desk-scale stack for training and evaluating manipulation policies that
receive object identity exclusively through a single-pixel location mask
produced by an open-vocabulary detector: a deterministic 2D simulator, a
detector oracle with a noise model plus a remote-detector client, the mask
pipeline, a conv/FiLM/token-attention/transformer policy with discretized
action heads, behavioral-cloning training, an evaluation and ablation
harness, and an HTTP rollout service.
"""

__version__ = "0.1.0"
