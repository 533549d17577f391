"""Package configurations."""

# SPDX-License-Identifier: Apache-2.0


# Network geometry
INPUT_SIZE = 107
CONV_SPECS = ((96, 7, 2), (256, 5, 2), (512, 3, 1))  # (channels, kernel, stride)
POOL_KERNEL = 3
POOL_STRIDE = 2
FC_WIDTH = 512
DESK_CHANNEL_SCALE = 0.125
MIN_FC_WIDTH = 8
DROPOUT_RATE = 0.5
INIT_STD = 0.01

# Local response normalization (VGG-M)
LRN_SIZE = 5
LRN_K = 2.0
LRN_ALPHA = 1e-4
LRN_BETA = 0.75

# Class indices of the binary classification branches
TARGET_LABEL = 0
BACKGROUND_LABEL = 1

# Patch normalization: RGB mapped to [0, 1], then this mean is subtracted
PIXEL_SCALE = 255.0
PATCH_MEAN = 0.5

# Candidate generation
NUM_CANDIDATES = 256
TRANS_VAR_COEFF = 0.09
SCALE_VAR = 0.25
SCALE_BASE = 1.05

# Training-sample proposals
POS_TRANS_STD = 0.1
NEG_TRANS_STD = 1.0
PROPOSAL_SCALE_STD = 0.05
SAMPLING_RETRY_FACTOR = 500
PATCH_BATCH_SIZE = 64

# Multi-domain pretraining
PRETRAIN_LR_CONV = 0.0001
PRETRAIN_LR_FC = 0.001
PRETRAIN_POS_PER_BATCH = 32
PRETRAIN_NEG_PER_BATCH = 96
PRETRAIN_ITERATIONS_PER_DOMAIN = 100
OFFLINE_POS_IOU = 0.7
OFFLINE_NEG_IOU = 0.5
FRAME_POS = 50
FRAME_NEG = 200
MOMENTUM = 0.9
WEIGHT_DECAY = 0.0005

# Online tracking
TAU_S = 20
TAU_L = 100
SCORE_THRESHOLD = 0.5
LONG_UPDATE_PERIOD = 10
SEARCH_EXPANSION_FACTOR = 1.5
MAX_SEARCH_EXPANSION = 3.0

# Bounding-box regression
REGRESSION_SAMPLES = 1000
REGRESSION_MIN_IOU = 0.6
REGRESSION_LAMBDA = 1000.0
REGRESSION_TRANS_STD = 0.3
REGRESSION_SCALE_STD = 0.15

# Evaluation
PRECISION_MAX_THRESHOLD = 50
REPRESENTATIVE_PRECISION_THRESHOLD = 20
SUCCESS_THRESHOLD_STEP = 0.05
REINIT_GAP = 5

# Checkpoint format
CHECKPOINT_MAGIC = b"MDNC"
CHECKPOINT_VERSION = 1

# On-disk sequence layout
SEQUENCE_IMAGE_DIR = "img"
SEQUENCE_GROUNDTRUTH_FILE = "groundtruth_rect.txt"
FRAME_EXTENSIONS = (".png", ".ppm", ".jpg", ".jpeg", ".bmp")
