"""Age estimators: likelihood, naive Bayes, pixelwise KNN and PRNU ordering."""

from .knn import PixelwiseKNNModel, block_votes, feature_map, lv_features, pixelwise_knn_classify, pixelwise_knn_train
from .ml import (
    LikelihoodAgeModel,
    LikelihoodClassifier,
    approximate_image,
    fit_likelihood_model,
    log_likelihood_profile,
    ml_approximate_age,
)
from .naive_bayes import NBModel, nb_classify, nb_log_posterior, nb_train
from .prnu import OrderResult, PRNUField, correlation_matrix, iip_place, mi_order, prnu_estimate

__all__ = [
    "LikelihoodAgeModel", "LikelihoodClassifier", "approximate_image", "fit_likelihood_model",
    "log_likelihood_profile", "ml_approximate_age",
    "NBModel", "nb_classify", "nb_log_posterior", "nb_train",
    "PixelwiseKNNModel", "block_votes", "feature_map", "lv_features", "pixelwise_knn_classify",
    "pixelwise_knn_train",
    "OrderResult", "PRNUField", "correlation_matrix", "iip_place", "mi_order", "prnu_estimate",
]
