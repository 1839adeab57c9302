"""scikit-learn style front end for training and applying a retargeting model."""
from __future__ import annotations

import tempfile

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .evaluation import DEFAULT_UNIT_SCALE_MM, cycle_evaluate
from .retarget_net import retarget_clip
from .training import TrainConfig, train
from .validation import check_clips, check_positive, check_skeleton


class MotionRetargeter(TransformerMixin, BaseEstimator):
    """Learn a human <-> robot motion mapping from unpaired clip collections.

    ``fit(X, y)`` takes human clips ``X`` and robot clips ``y`` (no pairing is
    assumed between them). ``transform`` maps human clips to the robot,
    ``inverse_transform`` maps robot clips to the human, and ``score`` is the
    negated cycle-reconstruction error in millimetres.
    """

    def __init__(self, human_config=None, robot_config=None, window=64, stride=32,
                 batch_size=8, epochs=1, steps=None, lr_generator=1e-4,
                 lr_discriminator=1e-4, w_adv=1.0, w_cycle=10.0, w_fk=5.0, w_latent=1.0,
                 w_ee=0.0, seed=42, unit_scale_mm=DEFAULT_UNIT_SCALE_MM, out_dir=None):
        self.human_config = human_config
        self.robot_config = robot_config
        self.window = window
        self.stride = stride
        self.batch_size = batch_size
        self.epochs = epochs
        self.steps = steps
        self.lr_generator = lr_generator
        self.lr_discriminator = lr_discriminator
        self.w_adv = w_adv
        self.w_cycle = w_cycle
        self.w_fk = w_fk
        self.w_latent = w_latent
        self.w_ee = w_ee
        self.seed = seed
        self.unit_scale_mm = unit_scale_mm
        self.out_dir = out_dir

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            seed=self.seed, window=self.window, stride=self.stride, batch_size=self.batch_size,
            epochs=self.epochs, steps=self.steps, lr_generator=self.lr_generator,
            lr_discriminator=self.lr_discriminator, w_adv=self.w_adv, w_cycle=self.w_cycle,
            w_fk=self.w_fk, w_latent=self.w_latent, w_ee=self.w_ee).validate()

    def fit(self, X, y):
        if self.human_config is None or self.robot_config is None:
            raise ValueError("human_config and robot_config are required")
        check_positive(self.unit_scale_mm, "unit_scale_mm")
        human = check_clips(X, "X")
        robot = check_clips(y, "y")
        config = self._train_config()
        if self.out_dir is None:
            with tempfile.TemporaryDirectory() as tmp:
                result = train(config, human, robot, tmp, self.human_config, self.robot_config)
        else:
            result = train(config, human, robot, self.out_dir, self.human_config,
                           self.robot_config)
        self.model_ = result.model
        self.history_ = result.history
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        clips = check_clips(X, "X", allow_empty=True)
        check_skeleton(clips, self.model_.domains["human"].skeleton, "X")
        return [retarget_clip(self.model_, "human", "robot", c) for c in clips]

    def inverse_transform(self, X):
        check_is_fitted(self, "model_")
        clips = check_clips(X, "X", allow_empty=True)
        check_skeleton(clips, self.model_.domains["robot"].skeleton, "X")
        return [retarget_clip(self.model_, "robot", "human", c) for c in clips]

    def score(self, X, y=None):
        """Negative frame-pooled cycle MJPE (mm) of human clips ``X``; higher is better."""
        check_is_fitted(self, "model_")
        clips = check_clips(X, "X")
        check_skeleton(clips, self.model_.domains["human"].skeleton, "X")
        return -cycle_evaluate(self.model_, "human", "robot", clips, self.unit_scale_mm).mjpe_mm
