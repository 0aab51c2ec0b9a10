"""What the two table kinds do to an image: full tables expand every
color to a learnable vector, compressed tables merge every c colors
into one learnable scalar."""

import numpy as np

from lookupvnet.lookup import FullLookupTables, compressed_index, init_tables, lookup, table_size

rng = np.random.default_rng(1)
image = rng.integers(0, 256, size=(3, 4, 4)).astype(np.uint8)

# Full tables, dimension 2: three channels become six planes.
full = init_tables("full", 2, seed=0)
coded = lookup(image, full).values
print(f"full u=2: image {image.shape} -> coded {coded.data.shape}")
print(f"learnable scalars: {sum(t.data.size for t in full.tables)}")

# Compressed tables: the color space shrinks by roughly c^3.
for c in (4, 16, 100, 256):
    tables = init_tables("compressed", c, seed=0)
    print(f"c={c:3d}: {table_size(c):3d} entries per channel, "
          f"color 200 lands in bucket {compressed_index(200, c)}")

# An identity coding: tables that reproduce the byte values exactly.
ramp = np.arange(256, dtype=np.float64).reshape(256, 1)
identity = FullLookupTables.from_channel_maps([ramp, ramp, ramp])
roundtrip = lookup(image, identity).values.data[0]
print(f"identity tables reproduce the image: {np.array_equal(roundtrip, image.astype(float))}")
