# SPDX-License-Identifier: GPL-2.0-or-later
import logging

import numpy as np

from tensor.loss import softmax_cross_entropy
from trainer.sgd import zero_velocity, apply_gradients
from util import batch_indices

EVAL_BATCH_SIZE = 256


class EmptySplitError(ValueError):
    pass


class TrainReport:

    def __init__(self):
        self.train_loss = []
        self.validation_accuracy = []
        self.learning_rate = []
        self.best_epoch = 0
        self.best_checkpoint_id = "epoch-0"
        self.test_accuracy = None

    @property
    def epochs(self):
        return len(self.train_loss)

    def record(self, epoch, loss, accuracy, lr):
        self.train_loss.append(loss)
        self.validation_accuracy.append(accuracy)
        self.learning_rate.append(lr)
        # first occurrence wins on ties
        if accuracy > max(self.validation_accuracy[:-1], default=-1.0):
            self.best_epoch = epoch
            self.best_checkpoint_id = "epoch-{}".format(epoch)
            return True
        return False

    def to_dict(self):
        return {
            "train_loss": list(self.train_loss),
            "validation_accuracy": list(self.validation_accuracy),
            "learning_rate": list(self.learning_rate),
            "best_epoch": self.best_epoch,
            "best_checkpoint_id": self.best_checkpoint_id,
            "test_accuracy": self.test_accuracy,
        }

    @classmethod
    def from_dict(cls, data):
        report = cls()
        report.train_loss = list(data["train_loss"])
        report.validation_accuracy = list(data["validation_accuracy"])
        report.learning_rate = list(data["learning_rate"])
        report.best_epoch = data["best_epoch"]
        report.best_checkpoint_id = data["best_checkpoint_id"]
        report.test_accuracy = data.get("test_accuracy")
        return report


class TrainState:
    """ Everything needed to continue fine-tuning after `epoch` completed epochs """

    def __init__(self, epoch, network, velocity, rng, report, best_network):
        self.epoch = epoch
        self.network = network
        self.velocity = velocity
        self.rng = rng
        self.report = report
        self.best_network = best_network


def classify_accuracy(network, split, batch_size=EVAL_BATCH_SIZE):
    """ Fraction of argmax(logits) == label in eval mode """
    if len(split) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(split), batch_size):
        idx = np.arange(start, min(start + batch_size, len(split)))
        images, labels = split.batch(idx)
        correct += int(np.sum(np.argmax(network.predict(images), axis=1) == labels))
    return correct / len(split)


def train_epoch(network, labeled, velocity, lr, cfg, rng):
    total, seen = 0.0, 0
    for idx in batch_indices(len(labeled), cfg.batch_size, rng):
        images, labels = labeled.batch(idx)
        logits, trace = network.forward(images, train_mode=True, rng=rng)
        loss, grad = softmax_cross_entropy(logits, labels)
        grads = network.backward(trace, grad)
        apply_gradients(network, grads, velocity, lr, cfg)
        total += loss * len(idx)
        seen += len(idx)
    return total / seen


def finetune(network, labeled, validation, cfg, rng, resume=None, stop_after=None, on_epoch=None):
    """
    End-to-end supervised training of every layer on the labeled split, with early
    stopping on validation accuracy. Returns (best network, TrainReport); the input
    network is not modified.

    resume: TrainState to continue from (its rng replaces `rng`).
    stop_after: stop once this epoch is done, as if interrupted.
    on_epoch: called with (epoch, TrainState) after every epoch.
    """
    if len(labeled) == 0:
        raise EmptySplitError("finetune: the labeled split is empty")

    if resume is None:
        net = network.copy()
        net.set_dropout_rate(cfg.dropout_rate)
        state = TrainState(0, net, zero_velocity(net), rng, TrainReport(), net.copy())
    else:
        state = resume

    net = state.network
    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        lr = cfg.learning_rate(epoch)
        loss = train_epoch(net, labeled, state.velocity, lr, cfg, state.rng)
        accuracy = classify_accuracy(net, validation)
        if state.report.record(epoch, loss, accuracy, lr):
            state.best_network = net.copy()
        state.epoch = epoch
        logging.info("finetune: epoch {} lr={:g} loss={:.5f} validation_accuracy={:.4f}".format(
            epoch, lr, loss, accuracy))
        if on_epoch is not None:
            on_epoch(epoch, state)
        if stop_after is not None and epoch >= stop_after:
            break

    return state.best_network, state.report
