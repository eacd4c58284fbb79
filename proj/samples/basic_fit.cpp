// Fits the toy study with the library API and prints weights, ATT and the
// placebo p-values.
//
//   basic_fit [path/to/toy_panel.csv]

#include <fstream>
#include <iostream>

#include "scm/scm.hpp"

int main(int argc, char** argv) {
    const std::string path = argc > 1 ? argv[1] : SCM_SAMPLE_PANEL;
    std::ifstream in(path);
    if (!in) {
        std::cerr << "cannot open " << path << '\n';
        return 1;
    }
    try {
        const scm::Panel panel = scm::load_panel(in);

        scm::StudySpec spec;
        spec.treated = "Ashford";
        spec.pre_start = scm::Period(2021, 1);
        spec.intervention = scm::Period(2023, 12);
        spec.post_end = scm::Period(2024, 6);

        const scm::StudyData study = scm::build_study(panel, spec);
        for (const auto& x : study.excluded) std::cout << "excluded " << x.label << ": " << x.reason << '\n';

        const auto fitted = scm::fit(study, scm::time_weights(study, spec.alpha));
        const auto effect = scm::gaps(study, fitted.weights);

        const auto table = scm::weight_table(study.donor_labels, fitted.weights);
        for (const auto& row : table.rows) std::cout << row.label << '\t' << scm::WeightTable::percent(row.hundredths) << "%\n";
        if (table.has_others) std::cout << "Others\t" << scm::WeightTable::percent(table.others.hundredths) << "%\n";

        std::cout << "ATT " << scm::round_dollars(effect.att) << ", pre-RMSPE "
                  << scm::csv::format_fixed(100 * effect.rmspe_pre_relative, 2) << "%\n";

        const auto inference = scm::infer(scm::run_placebos(study, spec.alpha));
        std::cout << "gap test p = " << inference.gap.p.str() << " = " << inference.gap.p.render() << '\n';
        std::cout << "ratio test p = " << inference.ratio.p.str() << " = " << inference.ratio.p.render() << ", rank "
                  << inference.ratio.rank << '\n';
    } catch (const scm::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
