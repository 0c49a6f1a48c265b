"""Gradient-weighted class activation maps for the patch-token backbone."""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .formats import CLASS_TOKENS


@dataclass(frozen=True)
class CamOverlay:
    image_id: str
    heat: np.ndarray  # same height/width as the source image, values in [0, 1]
    predicted: str
    confidence: float


def gradcam(model, image_tensor, image_id: str, out_hw) -> CamOverlay:
    """Attribution for the predicted class of one image.

    Channel weights are the gradients of the class score averaged over
    the patch tokens entering the final norm; the weighted token sum is
    rectified, reshaped to the patch grid, upsampled to the source size
    and min-max normalised.
    """
    model.eval()
    model.cam_mode = True
    try:
        logits = model(image_tensor.unsqueeze(0))
        probs = torch.softmax(logits, dim=1)[0]
        predicted = int(torch.argmax(probs))
        model.zero_grad(set_to_none=True)
        logits[0, predicted].backward()
        tokens = model.last_tokens[0]
        grads = model.last_tokens.grad[0]
    finally:
        model.cam_mode = False
        model.last_tokens = None

    weights = grads.mean(dim=0)
    cam = torch.relu((tokens * weights).sum(dim=1))
    grid = model.grid
    cam = cam.reshape(1, 1, grid, grid)
    cam = F.interpolate(cam, size=tuple(out_hw), mode="bilinear", align_corners=False)[0, 0]
    cam = cam.detach().numpy()
    span = cam.max() - cam.min()
    heat = (cam - cam.min()) / span if span > 0 else np.zeros_like(cam)
    return CamOverlay(
        image_id=image_id,
        heat=heat,
        predicted=CLASS_TOKENS[predicted],
        confidence=probs[predicted].detach().item(),
    )


def dilated_bbox(bbox, image_hw, frac: float = 0.15):
    """Expand a box by max(box width, box height, frac * side) per side.

    The floor covers the attribution grid's quantisation: one patch of the
    14x14 token grid plus upsampling blur spans roughly a tenth of the
    image side.
    """
    x0, y0, x1, y1 = bbox
    h, w = image_hw
    pad = max(x1 - x0, y1 - y0, frac * max(h, w))
    return (
        max(0, int(x0 - pad)),
        max(0, int(y0 - pad)),
        min(w, int(x1 + pad)),
        min(h, int(y1 + pad)),
    )


def argmax_inside(heat: np.ndarray, bbox) -> bool:
    y, x = np.unravel_index(int(np.argmax(heat)), heat.shape)
    x0, y0, x1, y1 = bbox
    return x0 <= x < x1 and y0 <= y < y1
