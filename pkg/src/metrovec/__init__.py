"""Unsupervised neighborhood embeddings from street-view features and POI text.

The pipeline runs in three stages: (1) triplet training of a street-view
feature encoder against geographic context, (2) neighborhood embeddings as
the mean of their street-view embeddings, (3) joint refinement of
neighborhood and POI-word embeddings on word triplets. Downstream analytics
cover repeated-split regression, clustering, and similarity search.
"""

from .encoder import EncoderParams, encode, encode_backward, init_encoder
from .errors import (FormatError, IntegrityError, NotFoundError, PipelineError,
                     StageOrderError, UsageError, ValidationError)
from .geo import GeoPoint, SpatialIndex, assign_neighborhood, build_index, haversine_distance, k_nearest
from .corpus import (NegativeWordSampler, PoiRecord, Vocabulary, WordBag,
                     build_neighborhood_bag, build_vocabulary, load_pretrained_vectors,
                     negative_sample_word, read_poi_jsonl, textualize_poi)
from .training import (EmbeddingStore, TrainingConfig, Triplet, aggregate_neighborhoods,
                       init_word_vectors, mean_triplet_loss, sample_sv_triplets,
                       train_poi_stage, train_street_view, triplet_grads, triplet_loss)
from .analytics import (PcaModel, RegressionReport, SplitProtocol, adjusted_rand_index,
                        cosine_rank, evaluate_regression, kmeans, linreg_fit,
                        linreg_predict, pca_fit, poistats_tfidf, r_squared)
from .synthcity import SynthCity, SynthConfig, export_city, generate_city

__version__ = "0.1.0"
