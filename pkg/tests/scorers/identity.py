"""Mock scorer that echoes the original crop scores, upsampled.

usage: identity.py INPUT OUTPUT CROP_SCORES.npy
"""
import sys

import numpy as np
from PIL import Image

from segdiag.ingest import bicubic_resize, write_scr1

src, dst, crop = sys.argv[1], sys.argv[2], np.load(sys.argv[3])
h, w = np.asarray(Image.open(src)).shape[:2]
write_scr1(dst, bicubic_resize(crop, size=(h, w)).astype(np.float32))
