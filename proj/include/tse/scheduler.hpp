#pragma once

#include <limits>

namespace tse {

struct PlateauConfig {
  double lr_floor = 1e-6;
  int patience = 2;         // non-improving epochs before a reduction
  int start_epoch = 85;     // reductions only happen after this many epochs
  double factor = 0.5;
};

struct SchedulerState {
  double current_lr = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_improve = 0;
};

// Reduce-on-plateau with a warm period. `epoch` is the 1-based index of the
// epoch whose validation loss is being reported. Improvement (strictly lower
// loss) resets the counter; once epoch > start_epoch, `patience` consecutive
// non-improving epochs multiply the rate by `factor`, never going below
// lr_floor, and reset the counter.
SchedulerState scheduler_step(SchedulerState state, double val_loss, int epoch,
                              const PlateauConfig& cfg);

}  // namespace tse
