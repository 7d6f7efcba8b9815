from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .layers import AttentionConfig, Block, CausalSelfAttention, LayerNorm, Linear, Module, causal_self_attention_block, positional_encoding
from .losses import bce_loss, kl_standard_normal
from .optim import SGD, Adam, Optimizer, make_optimizer, sgd_step
from .tensor import Tensor, no_grad
