#pragma once

#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "am/core.hpp"
#include "am/fea_explicit.hpp"
#include "am/hexmesh.hpp"

namespace am::modal {

// Small-strain linearization about the stress-free reference:
//   M xdd + K x = f(t)
// Stiffness from fully integrated trilinear hexes with a mean-dilatation
// volumetric treatment (the material is nearly incompressible); mass row-sum
// lumped.
struct LinearSystem {
    Eigen::SparseMatrix<double> stiffness;  // symmetric, n_dof x n_dof
    Eigen::VectorXd lumped_mass;            // diagonal entries, kg
    size_t n_nodes = 0;                     // dof map: node i -> dofs 3i..3i+2
    std::vector<int> constrained_dofs;      // eliminated rows/cols (sorted)

    int n_dof() const { return int(stiffness.rows()); }
};

LinearSystem assemble(const hexmesh::HexMesh& mesh, const fea::MaterialParams& mat,
                      const std::vector<std::string>& fixed_node_sets = {});

struct ModalResult {
    std::vector<double> frequencies_hz;              // ascending
    std::vector<Eigen::VectorXd> mode_shapes;        // unit M-norm, reduced dofs
    int rigid_mode_count = 0;

    // expands a reduced-space mode to per-node vectors (zeros on constraints)
    std::vector<Vec3> mode_as_vectors(const LinearSystem& sys, int mode) const;
};

ModalResult solve_modes(const LinearSystem& sys, int n_modes, double shift_hz = 0.0);

double first_flexible(const ModalResult& result);

std::string frequency_table_csv(const ModalResult& result);
void export_mode_shapes(const hexmesh::HexMesh& mesh, const LinearSystem& sys,
                        const ModalResult& result, int count, const std::string& path_prefix);

}  // namespace am::modal
