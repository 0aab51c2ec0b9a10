"""How far can the color space shrink before accuracy gives way?
Sweeps the compression rate on a small color-band task. At c=256 every
image collapses to the same constant input, so accuracy must fall to
chance; the interesting part is how late that cliff arrives."""

from lookupvnet.costing import pixel_bits
from lookupvnet.data import make_synthetic
from lookupvnet.lookup import init_tables, table_size
from lookupvnet.network import ConvSpec, ModelConfig, build_model
from lookupvnet.trainer import OptimState, TrainPlan, train_single

train = make_synthetic("separable", 48, 4, 8, 8, seed=[4, 0])
test = make_synthetic("separable", 24, 4, 8, 8, seed=[4, 1])

print(f"{'c':>4} {'entries':>8} {'bits/px':>8} {'test acc':>9}")
for c in (1, 4, 16, 64, 128, 256):
    tables = init_tables("compressed", c, seed=10)
    model = build_model(ModelConfig(
        input_channels=3,
        conv_blocks=(ConvSpec(kernel=3, filters=8, pool=True),),
        head_width=32,
        class_count=4,
        input_size=(8, 8),
        seed=0,
    ))
    plan = TrainPlan(epochs=20, batch_size=16, seed=0)
    metrics = train_single(model, tables, train, plan,
                           OptimState(lr=0.05, momentum=0.9), test_set=test)
    print(f"{c:>4} {table_size(c):>8} {pixel_bits(c):>8} {metrics.rows[-1].test_acc:>9.3f}")
