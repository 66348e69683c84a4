"""Explanations over middle-level features.

The decoder of an :class:`MlfAutoencoder` is stacked under the classifier,
with the residual injected as a bias at the junction, so the composite
reproduces the classifier's logits on the original image. Relevance is then
propagated from the predicted logit down to the code ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoders import MlfAutoencoder
from .errors import DimensionError, ValidationError
from .lrp import LrpConfig, lrp_propagate
from .nn import ActivationTrace, LayeredNetwork, as_tensor, forward
from .segmentation import Partition, SegmentationHierarchy


@dataclass(frozen=True)
class CompositeModel:
    decoder: LayeredNetwork
    residual: np.ndarray
    classifier: LayeredNetwork

    @property
    def network(self) -> LayeredNetwork:
        """Decoder and classifier layers back to back (residual kept separate)."""
        return LayeredNetwork(self.decoder.layers + self.classifier.layers,
                              self.classifier.readout)

    @property
    def junction(self) -> int:
        """Index of the last decoder layer inside :attr:`network`."""
        return len(self.decoder.layers) - 1

    def trace(self, h) -> ActivationTrace:
        dec = forward(self.decoder, h)
        x = dec.output + self.residual
        cls = forward(self.classifier, x)
        return ActivationTrace(dec.inputs + cls.inputs, dec.pre + cls.pre,
                               dec.post + cls.post, cls.output)

    def __call__(self, h) -> np.ndarray:
        return self.trace(h).output

    def logits(self, h) -> np.ndarray:
        return self.trace(h).logits


def stack_composite(ae: MlfAutoencoder, model: LayeredNetwork) -> CompositeModel:
    if ae.decoder.output_dim != model.input_dim:
        raise DimensionError(
            f"decoder emits {ae.decoder.output_dim} values but the classifier "
            f"expects {model.input_dim}"
        )
    if ae.decoder.layers[-1].activation != "identity":
        raise ValidationError("the decoder output layer must be linear")
    return CompositeModel(ae.decoder, np.asarray(ae.residual, dtype=np.float64), model)


@dataclass(frozen=True)
class RelevanceReport:
    kind: str
    levels: tuple[np.ndarray, ...]  # u_1..u_K (one entry for flat and vae)
    predicted_class: int
    logit: float
    config: LrpConfig
    pixel_relevance: np.ndarray
    catalog: tuple[str, ...] = ()
    dropped_units: int = 0

    @property
    def relevance(self) -> np.ndarray:
        """Finest-level (or only) relevance vector."""
        return self.levels[-1]

    def ranking(self, level: int = -1) -> np.ndarray:
        """Unit ids by descending relevance; ties go to the lower id."""
        u = self.levels[level]
        return np.argsort(-u, kind="stable")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "predicted_class": self.predicted_class,
            "logit": self.logit,
            "alpha": self.config.alpha,
            "beta": self.config.beta,
            "epsilon": self.config.epsilon,
            "levels": [u.tolist() for u in self.levels],
            "pixel_relevance": self.pixel_relevance.tolist(),
            "dropped_units": self.dropped_units,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RelevanceReport":
        cfg = LrpConfig(data["alpha"], data["beta"], data["epsilon"])
        return cls(
            data["kind"],
            tuple(np.asarray(u, dtype=np.float64) for u in data["levels"]),
            int(data["predicted_class"]),
            float(data["logit"]),
            cfg,
            np.asarray(data["pixel_relevance"], dtype=np.float64),
            dropped_units=int(data.get("dropped_units", 0)),
        )


def explain(model: LayeredNetwork, x, ae: MlfAutoencoder, cfg: LrpConfig | None = None,
            target: int | None = None) -> RelevanceReport:
    """Relevance of every MLF of ``ae`` for the classifier's decision on ``x``."""
    cfg = cfg or LrpConfig()
    x = as_tensor(x).reshape(-1)
    logits = forward(model, x).logits
    composite = stack_composite(ae, model)
    h = ae.encode()
    trace = composite.trace(h)
    if target is None:
        target = int(np.argmax(logits))
    rel = lrp_propagate(
        composite.network, h, cfg, target, trace=trace,
        junction_bias={composite.junction: composite.residual},
    )
    n_dec = len(ae.decoder.layers)
    if ae.kind == "vae":
        levels = (rel.relevances[0],)
    else:
        levels = tuple(rel.relevances[k] for k in range(n_dec))
    return RelevanceReport(
        ae.kind, levels, int(target), float(logits[target]), cfg,
        rel.relevances[n_dec], ae.catalog, rel.dropped_units,
    )


def aggregate_oracle(model: LayeredNetwork, x, partition: Partition,
                     cfg: LrpConfig | None = None, target: int | None = None) -> np.ndarray:
    """Per-segment sums of plain pixel-level LRP on the classifier alone."""
    cfg = cfg or LrpConfig()
    x = as_tensor(x).reshape(-1)
    pix = lrp_propagate(model, x, cfg, target).input_relevance
    channels = x.size // partition.labels.size
    region_of = np.repeat(partition.labels, channels)
    return np.bincount(region_of, weights=pix, minlength=partition.n_regions)


def hierarchical_drilldown(report: RelevanceReport, hierarchy: SegmentationHierarchy,
                           branches: int = 2) -> list[tuple[int, ...]]:
    """Chains of region ids, coarse to fine, starting at the top coarse segments.

    Each chain follows the most relevant child of the previous pick; ties go
    to the lower region id.
    """
    if report.kind not in ("hier-seg", "flat-seg"):
        raise ValidationError("drill-down needs a segmentation report")
    if len(report.levels) != hierarchy.depth:
        raise ValidationError("report and hierarchy have different depths")
    if not 1 <= branches <= hierarchy.levels[0].n_regions:
        raise ValidationError(
            f"branches must lie in [1, {hierarchy.levels[0].n_regions}], got {branches}"
        )
    chains = []
    for start in report.ranking(0)[:branches]:
        chain = [int(start)]
        for k in range(1, hierarchy.depth):
            kids = hierarchy.children(k - 1, chain[-1])
            u = report.levels[k][kids]
            chain.append(int(kids[np.argsort(-u, kind="stable")[0]]))
        chains.append(tuple(chain))
    return chains
