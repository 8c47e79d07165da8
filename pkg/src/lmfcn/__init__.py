"""Large-margin representation learning for texture classification.

A small fully convolutional network maps images to compact latent vectors.
An RBF-kernel SVM is retrained on those latents every epoch, and the
network weights are updated by backpropagating a three-term anchor loss
computed only on support vectors, misclassified instances and selected
well-classified instances.
"""

__version__ = "0.1.0"
