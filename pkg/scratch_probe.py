import sys, time
sys.path.insert(0, "src")
import numpy as np
import torch
from surfrad.dataset import generate_dataset
from surfrad.fields import ModelConfig
from surfrad.losses import LossConfig
from surfrad.metrics import chamfer_to_scene, psnr
from surfrad.rendering import RenderConfig, extract_mesh, render_image
from surfrad.scenes import preset_scene
from surfrad.training import held_out_context, make_state, pretrain

LR = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-3
STEPS = int(sys.argv[2]) if len(sys.argv) > 2 else 1500
WREG = float(sys.argv[3]) if len(sys.argv) > 3 else 0.1
NRAYS = int(sys.argv[4]) if len(sys.argv) > 4 else 96

model_cfg = ModelConfig(
    feature_dim=32, image_widths=(8, 16, 24), fusion_dim=48, fusion_heads=4,
    fusion_ff_dim=96, decoder_dim=32, decoder_heads=4, decoder_ff_dim=48,
    embed_dim=64, trunk_width=64, trunk_layers=4, geometry_width=48,
    geometry_layers=2, texture_width=48, texture_layers=3,
)
loss_cfg = LossConfig(n_geo=384, n_reg=48, n_rays=NRAYS, lr_pretrain=LR,
                      weight_reg=WREG, iters_pretrain=STEPS)
render_cfg = RenderConfig(n_coarse=32, n_fine=8, chunk=4096)

sample = generate_dataset(preset_scene("sphere_box"), "sb", 6, (128, 128), seed=0)
held = 0
state = make_state(model_cfg, loss_cfg, seed=0)

def report(state):
    ctx = held_out_context(state.model, sample, held)
    img, opac, _ = render_image(state.model, ctx, sample.cameras[held],
                                sample.depth_range, render_cfg,
                                background=tuple(sample.scene.background))
    gt = sample.images[held]
    mask = sample.masks[held]
    p = psnr(img, gt, mask=mask)
    pred_sil = opac >= 0.5
    inter = np.logical_and(pred_sil, mask).sum()
    union = np.logical_or(pred_sil, mask).sum()
    iou = inter / union if union else 1.0
    try:
        mesh = extract_mesh(lambda q: state.model.surface_values(ctx, q, chunk=32768),
                            sample.bounds, grid_res=64)
        cham = chamfer_to_scene(mesh, sample.scene) if not mesh.is_empty else float("nan")
    except Exception as e:
        cham = float("nan")
    print(f"step {state.step}: psnr {p:.2f} iou {iou:.3f} chamfer64 {cham:.4f} "
          f"avg {dict((k, round(v, 4)) for k, v in state.loss_avg.items())}", flush=True)

t0 = time.perf_counter()
while state.step < STEPS:
    pretrain([sample], loss_cfg, render_config=render_cfg, state=state, n_steps=250)
    report(state)
print(f"total {time.perf_counter()-t0:.0f}s for {STEPS} steps")

from surfrad.checkpoint import save_checkpoint
from surfrad.config import RunConfig
save_checkpoint("probe_state.ckpt", state,
                RunConfig(seed=0, model=model_cfg, loss=loss_cfg,
                          render=render_cfg))
print("saved probe_state.ckpt")
