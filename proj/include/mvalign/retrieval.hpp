#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvalign/datamodel.hpp"

namespace mvalign {

/// Accumulated detection score per voted model id.
using VoteTally = std::map<std::string, double>;

VoteTally tally_votes(std::span<const Observation* const> observations);

/// Model with the largest summed score; ties go to the smallest id.
/// Throws NoVotes when no observation carries a vote.
std::string vote_model(std::span<const Observation* const> observations);
std::string vote_model(std::span<const Observation> observations);

/// Model whose embedding has the smallest cosine distance to `embedding`;
/// ties go to the smallest id. Throws DimensionMismatch.
std::string nearest_model(std::span<const double> embedding, const std::vector<CadModel>& cad_db);

/// Solid occupancy of a model on a resolution³ grid over the canonical cube
/// [-0.5, 0.5]³. Uses the model faces, or its convex hull when it has none.
std::vector<bool> voxelize(const CadModel& model, int resolution = 32);

/// Intersection over union of the two voxelizations.
double retrieval_iou(const CadModel& a, const CadModel& b, int resolution = 32);

}  // namespace mvalign
