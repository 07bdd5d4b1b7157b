from .svm import MarginClassifier, OneClassModel, rbf_kernel, train_margin, train_one_class  # noqa: F401
from .ann import NeuralClassifier, train_ann  # noqa: F401
from .smote import smote, smote_bits  # noqa: F401
from .bundle import ModelBundle, load_bundle, save_bundle  # noqa: F401
