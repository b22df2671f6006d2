"""Full group-segmentation model: extract, mine, fuse, enhance, decode."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dfe, dpg, losses, scl
from .backbone import Decoder, Encoder, EncoderConfig
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .tensor import Tensor


class DecisionCache(dict):
    """Records discrete choices (seed elections, attention ranks) so a
    forward pass can be replayed as a smooth function of its inputs."""


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = EncoderConfig()
    alpha: float = 3.0
    use_dpg: bool = True
    use_dfe: bool = True
    use_readjust: bool = True
    seed: int = 0


@dataclass
class ForwardResult:
    pred: Tensor  # [N, 1, H, W] soft masks in (0, 1)
    f_ext: Tensor
    mining: "dpg.DpgResult | None"
    fused: Tensor
    enhanced: Tensor


class CoSalModel:
    """Owns all parameters and wires the pipeline stages together."""

    def __init__(self, config: ModelConfig = ModelConfig()):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoder = Encoder(config.encoder, rng)
        channels = config.encoder.out_channels
        self.dpg_params = dpg.init_dpg_params(channels, rng)
        self.dfe_params = dfe.init_dfe_params(channels, rng)
        self.decoder = Decoder(config.encoder, rng)

    # -- parameter bookkeeping ---------------------------------------------

    def extractor_parameters(self) -> dict:
        return self.encoder.parameters()

    def head_parameters(self) -> dict:
        params = {}
        params.update(self.dpg_params.named())
        params.update(self.dfe_params.named())
        params.update(self.decoder.parameters())
        return params

    def parameters(self) -> dict:
        params = self.extractor_parameters()
        params.update(self.head_parameters())
        return params

    def save(self, path):
        save_checkpoint(path, self.parameters())

    def load(self, path):
        restore_into(self.parameters(), load_checkpoint(path))

    # -- forward passes -------------------------------------------------------

    def forward(self, images, decisions: DecisionCache | None = None) -> ForwardResult:
        """Run the whole group through the pipeline.

        ``images`` is a [N, 3, H, W] array (or Tensor); all images of the
        group are processed together, which is what lets the mining stage
        compare pixels across the group.
        """
        f_ext, skips = self.encoder.encode(images)
        if self.config.use_dpg:
            mining = dpg.run_dpg(f_ext, self.dpg_params, decisions, key="dpg")
            fused = dfe.fuse(mining.f_res, mining.maps, mining.proto)
        else:
            mining = None
            fused = f_ext
        if self.config.use_dfe:
            enhanced = dfe.enhance(fused, self.dfe_params, self.config.alpha,
                                   decisions, use_readjust=self.config.use_readjust)
        else:
            enhanced = fused
        pred = self.decoder.decode(enhanced, skips)
        return ForwardResult(pred=pred, f_ext=f_ext, mining=mining,
                             fused=fused, enhanced=enhanced)

    def predict(self, images) -> np.ndarray:
        """Inference path: plain forward, no supervision terms, raw array out."""
        return self.forward(images).pred.data

    def loss(self, images, masks: np.ndarray, weight: float,
             use_scl: bool = True,
             decisions: DecisionCache | None = None):
        """Training objective for one group.

        Returns (total, report): the scalar graph node and a LossReport of
        plain floats.  The self-contrast term needs the mining stage; it is
        skipped when the model runs without it or when ``use_scl`` is off.
        """
        result = self.forward(images, decisions)
        iou = losses.iou_loss(result.pred, masks)
        if use_scl and self.config.use_dpg:
            pair = scl.erase_and_prototype(result.f_ext, masks, self.dpg_params, decisions)
            contrast = scl.self_contrastive_loss(result.mining.proto, pair)
            total = losses.total_loss(iou, contrast.loss, weight)
            report = losses.LossReport(l_iou=iou.item(), l_sc=contrast.loss.item(),
                                       cos_c=contrast.cos_c, cos_b=contrast.cos_b,
                                       l_tot=total.item())
        else:
            total = iou
            report = losses.LossReport(l_iou=iou.item(), l_sc=0.0, cos_c=0.0,
                                       cos_b=0.0, l_tot=total.item())
        return total, report
