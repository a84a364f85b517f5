"""Active learning for image-text pairing.

Selects the unpaired items most likely to be hard negatives for the already
paired data, drives the query -> annotate -> retrain loop against a simulated
oracle or live annotators, and evaluates retrieval with Recall@K.
"""

from .corpus import (Corpus, EmbeddingRecord, Modality, PairedSet,
                     UnpairedPool, ingest_corpus, split_initial, synth_corpus,
                     write_corpus)
from .evaluation import (EpochMetrics, evaluate_model, metrics_to_csv,
                         r_at_k_sum, recall_at_k, write_metrics_csv)
from .hardneg import (BatchMode, HardNegConfig, ScoreReport, SelectionResult,
                      ThresholdVector, WeightMode, aggregation_weight,
                      compute_thresholds, default_zs_size, score_pool, select)
from .baselines import (Codebook, bow_feature, kcenter_greedy, kmeans,
                        kmeans_trace, mean_feature, random_select)
from .orchestrator import (ALRunConfig, AnnotationBatch, CoreSetVariant,
                           Direction, RunState, Strategy, StrategyKind,
                           export_selection_trace, initial_state, load_state,
                           resume_scenario, run_scenario, save_state,
                           select_for_epoch, simulated_annotator, step_epoch,
                           write_run_outputs)
from .simkernel import SimilarityMatrix, cosine, kth_largest, similarity_matrix
from .trainer import (DualEncoderParams, TrainConfig, encode, init_params,
                      load_model, max_hinge_loss, save_model, train)

__version__ = "0.1.0"
