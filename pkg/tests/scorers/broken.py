"""Mock scorer that misbehaves in a chosen way: fail, shape, silent, sleep."""
import sys
import time

import numpy as np

from segdiag.ingest import write_scr1

mode = sys.argv[3]
if mode == "fail":
    sys.exit(3)
if mode == "shape":
    write_scr1(sys.argv[2], np.full((2, 2, 2), 0.5, np.float32))
if mode == "sleep":
    time.sleep(10)
