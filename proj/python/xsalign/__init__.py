"""Cross-lingual static/contextual embedding alignment toolkit.

The heavy lifting lives in the compiled ``_core`` module; this package
re-exports its public surface. The full pipeline (tokenizer, encoder,
extraction, continued pre-training) is driven by the ``xsalign`` CLI; the
python bindings cover the numeric building blocks: embedding-space io and
transforms, Procrustes/CSLS mapping, self-learning, the MSE/DCCA alignment
losses, and the evaluation harnesses.
"""

try:
    from ._core import (
        BliResult,
        EmbeddingSpace,
        MappedPair,
        XsalignError,
        csls_matrix,
        dcca_loss,
        eval_bli,
        eval_similarity,
        induce_seed_unsupervised,
        knn_mean_similarity,
        map_supervised,
        mean_center,
        mse_loss,
        procrustes,
        read_dictionary,
        read_space,
        self_learn,
        spearman_rho,
        unit_normalize,
        write_dictionary,
        write_space,
    )
except ImportError:  # build-tree layout: _core next to the package on sys.path
    from _core import (
        BliResult,
        EmbeddingSpace,
        MappedPair,
        XsalignError,
        csls_matrix,
        dcca_loss,
        eval_bli,
        eval_similarity,
        induce_seed_unsupervised,
        knn_mean_similarity,
        map_supervised,
        mean_center,
        mse_loss,
        procrustes,
        read_dictionary,
        read_space,
        self_learn,
        spearman_rho,
        unit_normalize,
        write_dictionary,
        write_space,
    )

__all__ = [
    "BliResult",
    "EmbeddingSpace",
    "MappedPair",
    "XsalignError",
    "csls_matrix",
    "dcca_loss",
    "eval_bli",
    "eval_similarity",
    "induce_seed_unsupervised",
    "knn_mean_similarity",
    "map_supervised",
    "mean_center",
    "mse_loss",
    "procrustes",
    "read_dictionary",
    "read_space",
    "self_learn",
    "spearman_rho",
    "unit_normalize",
    "write_dictionary",
    "write_space",
]
