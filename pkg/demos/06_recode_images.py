"""Train briefly, then render what the learned coding looks like:
original images next to their table-coded versions as PPM files."""

import os

from lookupvnet.data import make_synthetic
from lookupvnet.lookup import init_tables
from lookupvnet.network import ConvSpec, ModelConfig, build_model
from lookupvnet.recode import recode_images
from lookupvnet.trainer import OptimState, TrainPlan, train_single

out_dir = os.environ.get("DEMO_OUT", "demo-recode")
train = make_synthetic("striped", 48, 4, 16, 16, seed=[5, 0])

tables = init_tables("compressed", 5, seed=20)  # 52 levels per channel
model = build_model(ModelConfig(
    input_channels=3,
    conv_blocks=(ConvSpec(kernel=3, filters=8, pool=True),),
    head_width=32,
    class_count=4,
    input_size=(16, 16),
    seed=0,
))
plan = TrainPlan(epochs=10, batch_size=16, seed=0)
metrics = train_single(model, tables, train, plan, OptimState(lr=0.05, momentum=0.9))
print(f"trained to train accuracy {metrics.rows[-1].train_acc:.3f}")

paths = recode_images(train.images[:6], tables, out_dir)
print(f"wrote {len(paths)} original/recoded pairs under {out_dir}/")
for orig, coded in paths[:3]:
    print(f"  {orig}  <->  {coded}")
