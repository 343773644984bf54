"""Mean cosine similarity of promoted, all and remaining cross-domain pairs after promoted-positive training.

Reported for the raw input features and for the learned embeddings, using the
pairs selected in the last training epoch.
"""

import argparse

from napgcl.experiments import benchmark_graph, final_cdp_similarity, with_ratio
from napgcl.metrics import cdp_similarity_report
from napgcl.train import TrainConfig, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nap-ratio", type=float, default=0.01)
    args = p.parse_args()

    graph = benchmark_graph()
    res = train(with_ratio(TrainConfig(), args.nap_ratio, args.seed), graph)
    src = res.source_graph
    reports = [cdp_similarity_report(src.features, src.domains, res.final_mask, "input_feature"),
               final_cdp_similarity(res, graph)]
    print(reports[0].rows()[0])
    for rep in reports:
        for line in rep.rows()[1:]:
            print(line)


if __name__ == "__main__":
    main()
