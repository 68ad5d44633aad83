"""Python bindings for the cspike spiking-network core.

The heavy lifting lives in the compiled extension `_cspike`; this package
re-exports its operations under a stable name. The extension sits inside the
package in installed trees and next to it in build trees.
"""

try:
    from . import _cspike as _impl
except ImportError:  # build-tree layout
    import _cspike as _impl

concat_time = _impl.concat_time
conv2d = _impl.conv2d
conv3d = _impl.conv3d
direct_encode = _impl.direct_encode
gen_shapes = _impl.gen_shapes
gen_temporal_order = _impl.gen_temporal_order
gradcheck = _impl.gradcheck
iou = _impl.iou
map_at_50 = _impl.map_at_50
neuron_forward = _impl.neuron_forward
nms = _impl.nms
run_experiment = _impl.run_experiment
sha1_hex = _impl.sha1_hex
shuffle_time = _impl.shuffle_time
transpose_time_channel = _impl.transpose_time_channel
ttfs_encode = _impl.ttfs_encode
ttfs_spike_step = _impl.ttfs_spike_step

__all__ = [
    "concat_time",
    "conv2d",
    "conv3d",
    "direct_encode",
    "gen_shapes",
    "gen_temporal_order",
    "gradcheck",
    "iou",
    "map_at_50",
    "neuron_forward",
    "nms",
    "run_experiment",
    "sha1_hex",
    "shuffle_time",
    "transpose_time_channel",
    "ttfs_encode",
    "ttfs_spike_step",
]
