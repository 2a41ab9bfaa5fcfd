from rest_framework import serializers

from beacons.grid import PairKey
from core.exceptions import DataError
from .aggregate import WeightedGraph


class NodeSerializer(serializers.Serializer):
    id = serializers.IntegerField(min_value=0)
    labels = serializers.DictField(child=serializers.CharField(allow_blank=True), default=dict)


class EdgeSerializer(serializers.Serializer):
    lo = serializers.IntegerField(min_value=0)
    hi = serializers.IntegerField(min_value=0)
    weight = serializers.IntegerField(min_value=1)

    def validate(self, attrs):
        if attrs['lo'] >= attrs['hi']:
            raise serializers.ValidationError('edge endpoints must satisfy lo < hi')
        return attrs


class WeightedGraphSerializer(serializers.Serializer):
    """graph-json layout: span, labelled nodes and a weighted edge list."""

    span = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2)
    nodes = NodeSerializer(many=True)
    edges = EdgeSerializer(many=True)

    def to_representation(self, graph):
        return {
            'span': list(graph.span),
            'nodes': [{'id': n, 'labels': dict(labels)} for n, labels in graph.nodes.items()],
            'edges': [{'lo': lo, 'hi': hi, 'weight': w} for (lo, hi), w in graph.edges.items()],
        }


def graph_from_payload(payload):
    serializer = WeightedGraphSerializer(data=payload)
    if not serializer.is_valid():
        raise DataError(f'invalid graph document: {serializer.errors}')
    data = serializer.validated_data
    nodes = {node['id']: dict(node['labels']) for node in data['nodes']}
    edges = {}
    for edge in data['edges']:
        pair = PairKey(edge['lo'], edge['hi'])
        edges[pair] = edge['weight']
        nodes.setdefault(pair.lo, {})
        nodes.setdefault(pair.hi, {})
    return WeightedGraph(dict(sorted(nodes.items())), dict(sorted(edges.items())), tuple(data['span']))
