"""gaussproto: explainable segmentation with a gradient-trained Gaussian prototype layer.

Subpackages / modules
---------------------
numerics
    Dense tensors with reverse-mode differentiation, linear-algebra
    kernels, optimizers, and the finite-difference gradient oracle.
gpl
    The Gaussian prototype layer: class-assigned anisotropic components,
    conditional log-responsibilities, the mixture NLL, the positive
    linear head, and the cross-class L1 penalty.
encoders
    Residual convolutional feature extractor, 1x1 channel reducer with
    its pretraining decoder, and the secondary region-proposal encoder.
regions
    SLIC superpixels, enclosing boxes, majority labeling, RoIAlign.
pipeline
    ProtoSegNet / ProtoBBNet assembly, the four-stage training schedule,
    per-pixel segmentation, checkpoint serialization.
explain
    Prototype localization (upscaling rule / superpixel boundaries) and
    gallery rendering.
evalkit
    Segmentation metrics plus the HSV-GMM superpixel baseline.
datasets
    Dataset layout on disk and the synthetic disc-image generator.
cli
    Command-line entry points (generate-data, train, eval, segment, explain).
"""

__version__ = "0.1.0"

from . import errors

__all__ = ["errors", "__version__"]
