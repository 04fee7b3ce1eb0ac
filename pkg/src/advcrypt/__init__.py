"""advcrypt: adversarial dataset encryption.

Perturbs every image of a labeled dataset toward a secret per-class target
so models trained on the shared data perform well on similarly encrypted
inputs but poorly on the originals, plus the evaluation and attacker
harnesses for stress-testing the scheme.
"""

from .classifier import (ClassifierHandle, TrainConfig, accuracy,
                         load_checkpoint, loss_and_input_gradient, predict,
                         save_checkpoint, train)
from .combine import CombinerSpec, horizontal_concat, mixup, mixup_and_concat
from .correspondence import (Correspondence, apply_post_map,
                             permutation_correspondence, random_correspondence,
                             table_correspondence)
from .data import (DatasetManifest, LabeledDataset, load_dataset,
                   load_encrypted, save_encrypted, split)
from .encrypt import (EncryptionRecipe, encrypt_basic, encrypt_combined,
                      encrypt_random_targets)
from .errors import (AdvcryptError, AttackError, IntegrityError, LoadError,
                     TrainingError, ValidationError)
from .evaluate import (EvaluationReport, cross_domain_probe, evaluation_matrix,
                       prediction_distribution)
from .pgd import AttackConfig, pgd_targeted, pgd_targeted_batch, project_l2

__version__ = "0.1.0"
