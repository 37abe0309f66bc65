#pragma once

// Binary RBM / conditional RBM library for item cold-start recommendation:
// data ingestion and task protocols, CD-1 training, cold-start scoring with
// ROC/AUC evaluation, and k-means interpretation of the feature weights.

#include "coldstart/common.hpp"
#include "coldstart/data.hpp"
#include "coldstart/eval.hpp"
#include "coldstart/interpret.hpp"
#include "coldstart/model.hpp"
#include "coldstart/oracle.hpp"
#include "coldstart/serialize.hpp"
#include "coldstart/training.hpp"
#include "coldstart/verify.hpp"
