import os

# pin BLAS threads before anything imports numpy: bitwise-reproducible sums
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
