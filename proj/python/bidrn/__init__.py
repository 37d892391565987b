from ._bidrn import (
    ConfigError,
    DimensionError,
    binary_conv2d,
    conv2d_reference,
    hardtanh,
    model_stats,
    pack_signs,
    preset_config,
    preset_names,
    set_max_threads,
    sign,
    soft_argmax,
    ste_grad,
    train_toy,
    xnor_dot,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "binary_conv2d",
    "conv2d_reference",
    "hardtanh",
    "model_stats",
    "pack_signs",
    "preset_config",
    "preset_names",
    "set_max_threads",
    "sign",
    "soft_argmax",
    "ste_grad",
    "train_toy",
    "xnor_dot",
]
