from .tensor import (Tensor, Parameter, as_tensor, concat, conv1d,
                     embedding_lookup, gather_frames, matmul, softmax)
from .modules import (Module, ModuleList, Linear, Conv1d, Embedding, Dropout,
                      LSTM, BiLSTM, GRU, SpectralNorm)
from .optim import Adam, OptimizerError

__all__ = [
    "Tensor", "Parameter", "as_tensor", "concat", "conv1d", "embedding_lookup",
    "gather_frames", "matmul", "softmax",
    "Module", "ModuleList", "Linear", "Conv1d", "Embedding", "Dropout",
    "LSTM", "BiLSTM", "GRU", "SpectralNorm",
    "Adam", "OptimizerError",
]
