"""Conditional Wasserstein GAN chatbot: transformer generator and critic on
a hand-built autodiff engine, with corpus pipeline, training schedule,
evaluation metrics, and chat runtime."""

from .critic import (
    CriticConfig,
    CriticModel,
    PairInput,
    clip_weights,
    critic_loss,
    generator_adv_loss,
)
from .data import (
    BOS,
    EOS,
    PAD,
    SEP,
    UNK,
    Batch,
    DialoguePair,
    TokenSequence,
    Vocab,
    detokenize,
    parse_chitchat,
    parse_cornell,
    prepare_corpus,
    split_and_batch,
    tokenize,
)
from .generator import GeneratorConfig, GeneratorModel, GumbelRollout
from .metrics import MetricReport, bleu4, evaluate_corpus, f_measure, meteor_lite, rouge_l
from .optim import Adam, MissingGradientError, RMSProp, zero_grads
from .tensor import (
    GraphError,
    ShapeError,
    Tensor,
    backward,
    default_dtype,
    no_grad,
    set_debug_checks,
    set_default_dtype,
)
from .training import (
    PhaseOrderError,
    TrainConfig,
    TrainState,
    TrainingDiverged,
    adversarial_epoch,
    pretrain,
    run_training,
    teacher_forced_accuracy,
)

__version__ = "0.1.0"
