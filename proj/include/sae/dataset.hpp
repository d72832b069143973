#pragma once

#include <string>

#include "sae/types.hpp"

namespace sae {

// Area-level CSV: header `area,y,N,x1,...,xk` (any k >= 0), one row per
// area.  Lines starting with '#' are skipped.  An intercept column is
// prepended to the covariates.  Throws MissingColumn / NonIntegerCount /
// NonPositivePopulation / DuplicateAreaId / EmptyArea on bad input.
AreaDataset load_area_csv(const std::string& path);
void save_area_csv(const AreaDataset& data, const std::string& path,
                   const std::string& provenance = "");

// Unit-level CSV: header `area,y,m,w,x1,...,xk` (k >= 1, integer-coded
// covariates), plus a class-size CSV `area,class,N` giving population
// counts N_dl per covariate class.  Class labels are the covariate values
// joined by '_' ("0_1_1_0"); every sampled unit's pattern must appear in
// the class-size file for its area (UnknownClass otherwise), while
// population-only classes (no sampled units) are allowed.
UnitDataset load_unit_csv(const std::string& unit_path, const std::string& class_path);
void save_unit_csv(const UnitDataset& data, const std::string& unit_path,
                   const std::string& class_path, const std::string& provenance = "");

// Builds the class label for a raw covariate row (without intercept).
std::string class_label_for(const Eigen::VectorXd& x_raw);

}  // namespace sae
