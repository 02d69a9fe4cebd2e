"""Sample paths of Hermite processes (exact fBm, NCLT partial sums, chaos grid)."""

from .chaos import (ChaosGrid, CoefficientParts, KernelTruncationError, build_grid,
                    decompose_coefficient, decompose_coefficient_batch, grid_norm,
                    normalize_cqh, simulate_chaos_batch, simulate_chaos_grid,
                    simulate_chaos_path, tail_fraction, wavelet_tail_integral)
from .fgn import fgn_autocovariance, generate_fgn
from .nclt import partial_sum_variance, simulate_hermite_nclt
from .paths import (BACKENDS, CLI_BACKENDS, ModelParams, ProcessPath, hermite_poly, read_path,
                    simulate_fbm_exact, write_path)
