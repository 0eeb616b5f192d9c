# This file is a part of CycleWalk

from .tensor import (
    DROPPED, DTYPES, ComputeNode, Graph, Tensor, add, backward, forward_eval,
    gather, l2_normalize_rows, log, mask_fill, matmul, mul, relu, row_renormalize,
    row_softmax, scale, softmax_xent, transpose,
)
from .tensor import sum as reduce_sum
from .params import ParamSet
from .gradcheck import finite_diff_check
