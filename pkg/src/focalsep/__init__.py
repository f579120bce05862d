"""Focused linear attention, a toy source separator built on it, and a
scaling benchmark harness, all on a minimal reverse-mode autodiff core.

Attribute access is lazy so that the CLI can pin BLAS thread counts
before numpy is first imported.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "Tensor": "tensor",
    "live_elements": "tensor",
    "peak_elements": "tensor",
    "reset_peak_elements": "tensor",
    "Tape": "tape",
    "GradMap": "tape",
    "backward": "tape",
    "stop_recording": "tape",
    "grad_check": "gradcheck",
    "AttentionMode": "attention",
    "FlaParams": "attention",
    "focused_feature_map": "attention",
    "relu_kernel": "attention",
    "focused_kernel": "attention",
    "softmax_attention": "attention",
    "vanilla_linear_attention": "attention",
    "focused_linear_attention": "attention",
    "multi_head_fla": "attention",
    "gated_fla": "attention",
    "SepNetConfig": "separation",
    "SepNet": "separation",
    "MixtureSample": "separation",
    "tiny_config": "separation",
    "net_from_flat": "separation",
    "encode": "separation",
    "separate": "separation",
    "si_snr": "separation",
    "pit_loss": "separation",
    "synth_mixture": "separation",
    "train_toy": "separation",
    "save_model": "modelio",
    "load_model": "modelio",
    "read_f32": "audio",
    "write_f32": "audio",
    "BenchConfig": "bench",
    "BenchRecord": "bench",
    "SlopeFit": "bench",
    "time_forward": "bench",
    "fit_slope": "bench",
    "run_suite": "bench",
    "ShapeError": "errors",
    "ConfigError": "errors",
    "ContractError": "errors",
    "NumericError": "errors",
    "ShortInputError": "errors",
    "UndefinedReferenceError": "errors",
    "TrainingDivergedError": "errors",
    "DegenerateRowWarning": "errors",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name: str):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    module = importlib.import_module(f".{module_name}", __name__)
    return getattr(module, name)


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
